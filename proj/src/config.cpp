#include "posediff/config.hpp"

#include "posediff/errors.hpp"

#include <fstream>
#include <set>

namespace posediff {

using nlohmann::json;

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? std::filesystem::path(out_dir) / "checkpoint.bin" : std::filesystem::path(checkpoint);
}

ConditionMask RunConfig::inference_mask() const {
  ConditionMask m;
  m.timestep = !zero_timestep;
  m.rgb = !zero_rgb;
  m.point = !zero_point;
  m.shape = !zero_shape;
  return m;
}

InferenceOptions RunConfig::inference(std::uint64_t sample_seed) const {
  InferenceOptions o;
  o.steps = steps;
  o.eta = eta;
  o.seed = sample_seed;
  o.mask = inference_mask();
  return o;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  for (const auto& c : gen.categories) c.validate();
  if (train.T != model.T()) fail(ErrorKind::Config, "T differs between model and training");
  if (steps < 1 || steps > model.T())
    fail(ErrorKind::Config, "steps must lie in [1, T], got " + std::to_string(steps));
  if (eta < 0.0) fail(ErrorKind::Config, "ddim_eta must be >= 0");
  if (gen.train_per_category < 0 || gen.test_per_category < 0)
    fail(ErrorKind::Config, "per-category scene counts must be >= 0");
  if (gen.render.depth_noise < 0.0) fail(ErrorKind::Config, "depth_noise must be >= 0");
  if (gen.render.num_points != model.conditioning.num_points)
    fail(ErrorKind::Config, "render num_points must equal the model's num_points");
  if (gen.render.crop_size != model.conditioning.image_size)
    fail(ErrorKind::Config, "crop size must equal the model's image_size");
}

json RunConfig::to_json() const {
  json j = model.to_json();
  const json t = train.to_json();
  for (const auto& [k, v] : t.items()) j[k] = v;
  j["seed"] = seed;
  j["train_per_category"] = gen.train_per_category;
  j["test_per_category"] = gen.test_per_category;
  j["depth_noise"] = gen.render.depth_noise;
  j["dataset"] = dataset;
  j["out_dir"] = out_dir;
  j["checkpoint"] = checkpoint;
  j["steps"] = steps;
  j["ddim_eta"] = eta;
  j["zero_timestep"] = zero_timestep;
  j["zero_rgb"] = zero_rgb;
  j["zero_point"] = zero_point;
  j["zero_shape"] = zero_shape;
  return j;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  const json defaults = RunConfig{}.to_json();
  for (const auto& [k, v] : defaults.items()) keys.push_back(k);
  return keys;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::Config, "config must be a flat JSON object");
  const auto known = run_config_keys();
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) fail(ErrorKind::Config, "unknown config key '" + k + "'");
    if (v.is_object() || v.is_array()) fail(ErrorKind::Config, "config key '" + k + "' must be a scalar");
  }
  RunConfig c;
  try {
    // Missing keys keep the desk defaults.
    json merged = c.to_json();
    for (const auto& [k, v] : j.items()) merged[k] = v;
    ModelConfig m = ModelConfig::from_json(merged);
    c.model = m;
    c.train = TrainConfig::from_json(merged);
    c.train.T = c.model.conditioning.T;
    merged.at("seed").get_to(c.seed);
    c.train.seed = c.seed;
    c.gen.seed = c.seed;
    merged.at("train_per_category").get_to(c.gen.train_per_category);
    merged.at("test_per_category").get_to(c.gen.test_per_category);
    merged.at("depth_noise").get_to(c.gen.render.depth_noise);
    c.gen.render.num_points = c.model.conditioning.num_points;
    c.gen.render.crop_size = c.model.conditioning.image_size;
    merged.at("dataset").get_to(c.dataset);
    merged.at("out_dir").get_to(c.out_dir);
    merged.at("checkpoint").get_to(c.checkpoint);
    merged.at("steps").get_to(c.steps);
    merged.at("ddim_eta").get_to(c.eta);
    merged.at("zero_timestep").get_to(c.zero_timestep);
    merged.at("zero_rgb").get_to(c.zero_rgb);
    merged.at("zero_point").get_to(c.zero_point);
    merged.at("zero_shape").get_to(c.zero_shape);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("config type error: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

json read_flat(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) { return RunConfig::from_json(read_flat(path)); }

void apply_override(json& flat, const std::string& key, const std::string& value) {
  const json defaults = RunConfig{}.to_json();
  if (!defaults.contains(key)) fail(ErrorKind::Config, "unknown config key '" + key + "'");
  const json& proto = defaults[key];
  auto whole = [&](std::size_t used) {
    if (used != value.size()) fail(ErrorKind::Config, "--" + key + ": cannot parse '" + value + "'");
  };
  try {
    std::size_t used = 0;
    if (proto.is_boolean()) {
      if (value == "true" || value == "1") flat[key] = true;
      else if (value == "false" || value == "0") flat[key] = false;
      else fail(ErrorKind::Config, "--" + key + " expects true or false, got '" + value + "'");
    } else if (proto.is_number_unsigned()) {
      if (!value.empty() && value[0] == '-') fail(ErrorKind::Config, "--" + key + " must be non-negative");
      const auto v = std::stoull(value, &used);
      whole(used);
      flat[key] = v;
    } else if (proto.is_number_integer()) {
      const auto v = std::stoll(value, &used);
      whole(used);
      flat[key] = v;
    } else if (proto.is_number_float()) {
      const auto v = std::stod(value, &used);
      whole(used);
      flat[key] = v;
    } else {
      flat[key] = value;
    }
  } catch (const std::logic_error&) {
    fail(ErrorKind::Config, "--" + key + ": cannot parse '" + value + "'");
  }
}

RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  json flat = file.empty() ? json::object() : read_flat(file);
  for (const auto& [k, v] : overrides) apply_override(flat, k, v);
  return RunConfig::from_json(flat);
}

}  // namespace posediff
