#include "posediff/cli.hpp"

#include "posediff/config.hpp"
#include "posediff/dataset.hpp"
#include "posediff/errors.hpp"
#include "posediff/eval.hpp"
#include "posediff/grasp.hpp"
#include "posediff/plot.hpp"

#include "CLI11.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

namespace posediff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      fail(ErrorKind::Config, what + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) fail(ErrorKind::Config, what + " is empty");
  return out;
}

std::unique_ptr<PoseDiffusionModel> load_model(const RunConfig& cfg) {
  const fs::path p = cfg.checkpoint_path();
  if (!fs::exists(p)) fail(ErrorKind::Checkpoint, "checkpoint not found: " + p.string());
  return std::move(load_checkpoint(p).model);
}

json pose_json(const Pose9D& p) {
  json R = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) R.push_back(p.rotation.matrix()(r, c));
  return {{"t", {p.translation.x(), p.translation.y(), p.translation.z()}},
          {"R", R},
          {"s", {p.size.x(), p.size.y(), p.size.z()}}};
}

int cmd_gen(const RunConfig& cfg, std::ostream& out) {
  const int n = generate_dataset(cfg.gen, cfg.dataset);
  out << n << " samples written to " << cfg.dataset << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, bool resume, std::ostream& out) {
  const auto train = read_dataset(fs::path(cfg.dataset) / "train");
  if (train.empty()) fail(ErrorKind::Ingestion, "no training scenes under " + (fs::path(cfg.dataset) / "train").string());
  const fs::path ckpt = cfg.checkpoint_path();
  const fs::path log = fs::path(cfg.out_dir) / "train_log.jsonl";
  PoseDiffusionModel model(cfg.model);
  Trainer trainer(model, cfg.train);
  if (resume) {
    if (!fs::exists(ckpt)) fail(ErrorKind::Checkpoint, "cannot resume; no checkpoint at " + ckpt.string());
    trainer.restore(load_checkpoint_into(ckpt, model));
    spdlog::info("resuming from step {}", trainer.step());
  } else {
    fs::create_directories(cfg.out_dir);
    fs::remove(log);
  }
  std::vector<TrainingExample> examples;
  examples.reserve(train.size());
  for (const auto& s : train) examples.push_back(make_example(s, cfg.model.norm_scale));
  Trainer::FitOptions fo;
  fo.log_path = log;
  fo.checkpoint_path = ckpt;
  fo.meta = {{"run", cfg.to_json()}};
  const auto summary = trainer.fit(examples, fo);
  out << "trained " << summary.steps_run << " steps (now at step " << trainer.step() << ") in "
      << summary.wall_s << " s; checkpoint " << ckpt.string() << "\n";
  return kExitOk;
}

Predictor make_predictor(const std::string& kind, const RunConfig& cfg,
                         std::unique_ptr<PoseDiffusionModel>& model, int steps) {
  if (kind == "oracle") return [](const SceneSample& s) { return s.gt_pose; };
  if (kind == "random") return random_pose_predictor(cfg.seed);
  if (kind != "model") fail(ErrorKind::Config, "unknown predictor '" + kind + "'");
  if (!model) model = load_model(cfg);
  const PoseDiffusionModel* m = model.get();
  RunConfig c = cfg;
  c.steps = steps;
  return [m, c](const SceneSample& s) {
    return m->predict(s.observation(), c.inference(scene_seed(c.seed, s.scene_id))).pose;
  };
}

int cmd_eval(const RunConfig& cfg, const std::string& predictor, const std::string& sweep,
             const std::string& split, std::ostream& out) {
  const auto data = read_dataset(fs::path(cfg.dataset) / split);
  if (data.empty()) fail(ErrorKind::Ingestion, "no scenes under " + (fs::path(cfg.dataset) / split).string());
  std::unique_ptr<PoseDiffusionModel> model;
  EvalOptions eo;
  eo.categories = cfg.gen.categories;
  eo.iou_seed = cfg.seed;

  std::vector<int> steps_list = {cfg.steps};
  if (!sweep.empty()) steps_list = parse_int_list(sweep, "--sweep");
  json sweep_json = json::array();
  std::ostringstream sweep_csv;
  sweep_csv << "steps";
  for (const auto& n : MetricValues::names()) sweep_csv << "," << n;
  sweep_csv << ",count\n";
  MetricsReport primary;
  bool have_primary = false;
  for (int S : steps_list) {
    if (S < 1 || S > cfg.model.T()) fail(ErrorKind::Config, "steps " + std::to_string(S) + " outside [1, T]");
    const MetricsReport rep = evaluate(data, make_predictor(predictor, cfg, model, S), eo);
    json entry = rep.to_json();
    entry["steps"] = S;
    sweep_json.push_back(entry);
    sweep_csv << S;
    for (double v : rep.mean.values()) sweep_csv << "," << v;
    sweep_csv << "," << rep.mean.count << "\n";
    if (S == cfg.steps || !have_primary) {
      primary = rep;
      have_primary = S == cfg.steps;
    }
    out << "S=" << S;
    for (std::size_t i = 0; i < MetricValues::names().size(); ++i)
      out << " " << MetricValues::names()[i] << "=" << rep.mean.values()[i];
    out << "\n";
  }
  write_report(primary, cfg.out_dir);
  json j = primary.to_json();
  j["steps"] = have_primary ? cfg.steps : steps_list.front();
  j["predictor"] = predictor;
  if (!sweep.empty()) {
    j["sweep"] = sweep_json;
    std::ofstream(fs::path(cfg.out_dir) / "sweep.csv") << sweep_csv.str();
  }
  std::ofstream(fs::path(cfg.out_dir) / "report.json") << j.dump(2) << "\n";
  out << "report written to " << (fs::path(cfg.out_dir) / "report.json").string() << "\n";
  return kExitOk;
}

int cmd_infer(const RunConfig& cfg, const std::string& scene, const std::string& plan_out, std::ostream& out) {
  if (scene.empty()) fail(ErrorKind::Config, "--scene is required");
  const SceneSample s = read_sample(scene);
  const auto model = load_model(cfg);
  const Prediction pred = model->predict(s.observation(), cfg.inference(cfg.seed));
  json j = pose_json(pred.pose);
  j["steps"] = cfg.steps;
  j["seed"] = cfg.seed;
  j["denoiser_calls"] = pred.denoiser_calls;
  j["scene"] = s.scene_id;
  out << j.dump() << "\n";
  if (!plan_out.empty()) {
    GraspObject obj{s.scene_id, pred.pose, s.points.cast<double>()};
    write_plan(plan_grasps({obj}), plan_out);
  }
  return kExitOk;
}

int cmd_bench(const RunConfig& cfg, const std::string& steps_list, int frames, const std::string& split,
              std::ostream& out) {
  auto data = read_dataset(fs::path(cfg.dataset) / split);
  if (data.empty()) fail(ErrorKind::Ingestion, "no scenes under " + (fs::path(cfg.dataset) / split).string());
  if (frames < 1) fail(ErrorKind::Config, "--frames must be >= 1");
  if (static_cast<int>(data.size()) > frames) data.resize(static_cast<std::size_t>(frames));
  const auto model = load_model(cfg);
  const auto Ss = parse_int_list(steps_list, "--steps-list");
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };

  std::ostringstream csv;
  csv << "steps,frames,denoiser_calls_per_frame,cond_ms,sampling_ms,total_ms,fps\n";
  for (int S : Ss) {
    if (S < 1 || S > cfg.model.T()) fail(ErrorKind::Config, "steps " + std::to_string(S) + " outside [1, T]");
    RunConfig c = cfg;
    c.steps = S;
    const InferenceOptions warm = c.inference(0);
    model->predict(data.front().observation(), warm);
    double cond = 0.0, samp = 0.0;
    for (const auto& s : data) {
      const ObservationBatch obs = s.observation();
      const InferenceOptions io = c.inference(scene_seed(c.seed, s.scene_id));
      const std::uint64_t before = model->denoiser().block_applications();
      const auto t0 = clock::now();
      const NormalizationContext ctx = model->context_for(obs);
      const SceneFeatures f = model->conditioning().encode_scene(obs, ctx);
      const auto t1 = clock::now();
      const Prediction p = model->sample(f, ctx, io);
      const auto t2 = clock::now();
      const std::uint64_t blocks = model->denoiser().block_applications() - before;
      const auto per_call = static_cast<std::uint64_t>(cfg.model.denoiser.num_blocks);
      if (p.denoiser_calls != S || blocks != per_call * static_cast<std::uint64_t>(S))
        fail(ErrorKind::InvalidInput, "denoiser ran " + std::to_string(p.denoiser_calls) + " times for S=" +
                                          std::to_string(S));
      cond += ms(t1 - t0);
      samp += ms(t2 - t1);
    }
    const double n = static_cast<double>(data.size());
    const double total = (cond + samp) / n;
    csv << S << "," << data.size() << "," << S << "," << cond / n << "," << samp / n << "," << total << ","
        << 1000.0 / total << "\n";
    out << "S=" << S << " total_ms=" << total << " fps=" << 1000.0 / total << "\n";
  }
  fs::create_directories(cfg.out_dir);
  std::ofstream(fs::path(cfg.out_dir) / "bench.csv") << csv.str();
  return kExitOk;
}

int write_chart(const ChartSpec& spec, const fs::path& path, std::ostream& out) {
  write_png(path, render_line_chart(spec));
  out << path.string() << "\n";
  return 1;
}

int plot_report(const fs::path& in, const fs::path& dir, std::ostream& out) {
  std::ifstream is(in);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorKind::Ingestion, in.string() + ": " + e.what());
  }
  json runs = j.contains("sweep") ? j["sweep"] : json::array({j});
  if (!runs.is_array() || runs.empty()) fail(ErrorKind::Ingestion, in.string() + ": no report entries");
  int written = 0;
  for (const auto& metric : MetricValues::names()) {
    ChartSpec spec;
    spec.title = metric + " VS STEPS";
    spec.x_label = "DDIM STEPS";
    spec.y_label = metric;
    spec.log_x = true;
    std::map<std::string, Series> by_name;
    std::vector<std::string> order = {"mean"};
    for (const auto& r : runs) {
      if (!r.contains("mean") || !r["mean"].contains(metric))
        fail(ErrorKind::Ingestion, in.string() + ": missing metric " + metric);
      const double S = r.value("steps", 1.0);
      by_name["mean"].x.push_back(S);
      by_name["mean"].y.push_back(r["mean"][metric].get<double>());
      if (r.contains("per_category"))
        for (const auto& [cat, v] : r["per_category"].items()) {
          if (!by_name.count(cat)) order.push_back(cat);
          by_name[cat].x.push_back(S);
          by_name[cat].y.push_back(v.at(metric).get<double>());
        }
    }
    for (const auto& name : order) {
      by_name[name].label = name;
      spec.series.push_back(by_name[name]);
    }
    written += write_chart(spec, dir / (in.stem().string() + "_" + metric + ".png"), out);
  }
  return written;
}

int plot_log(const fs::path& in, const fs::path& dir, std::ostream& out) {
  std::ifstream is(in);
  const std::vector<std::string> keys = {"loss_total", "loss_cd", "loss_sl1", "loss_diff", "lr"};
  std::map<std::string, Series> s;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      for (const auto& k : keys) {
        s[k].x.push_back(j.at("step").get<double>());
        s[k].y.push_back(j.at(k).get<double>());
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::Ingestion, in.string() + ": " + e.what());
    }
    ++n;
  }
  if (n == 0) fail(ErrorKind::Ingestion, in.string() + " holds no log lines");
  int written = 0;
  for (const auto& k : keys) {
    ChartSpec spec;
    spec.title = "TRAINING " + k;
    spec.x_label = "STEP";
    spec.y_label = k;
    s[k].label = k;
    spec.series.push_back(s[k]);
    written += write_chart(spec, dir / (in.stem().string() + "_" + k + ".png"), out);
  }
  return written;
}

int cmd_plot(const RunConfig& cfg, const std::vector<std::string>& inputs, std::string out_dir, std::ostream& out) {
  if (inputs.empty()) fail(ErrorKind::InvalidInput, "plot needs at least one input file");
  if (out_dir.empty()) out_dir = (fs::path(cfg.out_dir) / "plots").string();
  fs::create_directories(out_dir);
  int written = 0;
  for (const auto& in : inputs) {
    if (!fs::exists(in)) fail(ErrorKind::Ingestion, "missing input " + in);
    if (fs::path(in).extension() == ".jsonl") written += plot_log(in, out_dir, out);
    else written += plot_report(in, out_dir, out);
  }
  if (written == 0) fail(ErrorKind::InvalidInput, "nothing to plot");
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion-based 9-DoF object pose estimation on synthetic desk scenes"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "flat JSON config file");

  const auto keys = run_config_keys();
  std::map<std::string, std::string> flag_values;
  for (const auto& k : keys) app.add_option("--" + k, flag_values[k], "overrides config key '" + k + "'")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto* gen = app.add_subcommand("gen", "write a synthetic dataset");
  auto* train = app.add_subcommand("train", "train and checkpoint the model");
  bool resume = false;
  train->add_flag("--resume", resume, "continue from the checkpoint");
  auto* eval = app.add_subcommand("eval", "score a predictor on a dataset split");
  std::string predictor = "model", sweep, split = "test";
  eval->add_option("--predictor", predictor, "model, oracle or random");
  eval->add_option("--sweep", sweep, "comma-separated step counts");
  eval->add_option("--split", split, "dataset split");
  auto* infer = app.add_subcommand("infer", "estimate the pose of one scene");
  std::string scene, plan_out;
  infer->add_option("--scene", scene, "scene directory")->required();
  infer->add_option("--plan-out", plan_out, "also write a grasp plan here");
  auto* bench = app.add_subcommand("bench", "time inference across step counts");
  std::string steps_list = "1,3,10,50";
  int frames = 20;
  bench->add_option("--steps-list", steps_list, "comma-separated step counts");
  bench->add_option("--frames", frames, "scenes timed per step count");
  bench->add_option("--split", split, "dataset split");
  auto* plot = app.add_subcommand("plot", "render report and training-log charts");
  std::vector<std::string> inputs;
  std::string plot_dir;
  plot->add_option("--inputs", inputs, "report.json / train_log.jsonl files")->required();
  plot->add_option("--out-dir", plot_dir, "output directory");
  for (auto* sub : {gen, train, eval, infer, bench, plot}) sub->fallthrough();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& k : keys)
      if (app.count("--" + k) > 0) overrides.emplace_back(k, flag_values[k]);
    const RunConfig cfg = resolve_config(config_path, overrides);
    if (gen->parsed()) return cmd_gen(cfg, out);
    if (train->parsed()) return cmd_train(cfg, resume, out);
    if (eval->parsed()) return cmd_eval(cfg, predictor, sweep, split, out);
    if (infer->parsed()) return cmd_infer(cfg, scene, plan_out, out);
    if (bench->parsed()) return cmd_bench(cfg, steps_list, frames, split, out);
    if (plot->parsed()) return cmd_plot(cfg, inputs, plot_dir, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error (filesystem): " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    err << "error (json): " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace posediff
