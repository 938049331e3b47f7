#include "posediff/model.hpp"

#include "posediff/errors.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace posediff {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

constexpr char kMagic[8] = {'P', 'D', 'I', 'F', 'F', 'C', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void ModelConfig::validate() const {
  conditioning.validate();
  denoiser.validate();
  if (denoiser.condition_width() != conditioning.condition_width())
    fail(ErrorKind::Config, "denoiser width " + std::to_string(denoiser.width) +
                                " does not match condition width " +
                                std::to_string(conditioning.condition_width()) + " + pose width " +
                                std::to_string(denoiser.pose_width));
  if (!(norm_scale > 0.0)) fail(ErrorKind::Config, "norm_scale must be positive");
}

ModelConfig ModelConfig::full_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::desk_scale() {
  ModelConfig c;
  c.conditioning.time_width = 64;
  c.conditioning.rgb_width = 128;
  c.conditioning.point_width = 128;
  c.conditioning.shape_width = 64;
  c.denoiser.pose_width = 64;
  c.denoiser.width = 448;
  c.denoiser.heads = 16;
  c.denoiser.token_count = 16;
  c.denoiser.head_dim = 28;
  c.denoiser.num_blocks = 3;
  c.denoiser.num_skips = 1;
  return c;
}

nlohmann::json ModelConfig::to_json() const {
  const auto& c = conditioning;
  const auto& d = denoiser;
  return {
      {"T", c.T},
      {"beta_start", beta_start},
      {"beta_end", beta_end},
      {"norm_scale", norm_scale},
      {"init_seed", init_seed},
      {"time_width", c.time_width},
      {"rgb_width", c.rgb_width},
      {"point_width", c.point_width},
      {"shape_width", c.shape_width},
      {"image_size", c.image_size},
      {"num_points", c.num_points},
      {"sinusoid_dims", c.sinusoid_dims},
      {"local_width", c.local_width},
      {"point_hidden", c.point_hidden},
      {"decoder_hidden", c.decoder_hidden},
      {"decoder_hidden2", c.decoder_hidden2},
      {"shape_encoder_hidden", c.shape_encoder_hidden},
      {"width", d.width},
      {"num_blocks", d.num_blocks},
      {"num_skips", d.num_skips},
      {"heads", d.heads},
      {"head_dim", d.head_dim},
      {"token_count", d.token_count},
      {"pose_width", d.pose_width},
      {"mlp_ratio", d.mlp_ratio},
      {"head_gain", d.head_gain},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig m;
  auto& c = m.conditioning;
  auto& d = m.denoiser;
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("T", c.T);
  get("beta_start", m.beta_start);
  get("beta_end", m.beta_end);
  get("norm_scale", m.norm_scale);
  get("init_seed", m.init_seed);
  get("time_width", c.time_width);
  get("rgb_width", c.rgb_width);
  get("point_width", c.point_width);
  get("shape_width", c.shape_width);
  get("image_size", c.image_size);
  get("num_points", c.num_points);
  get("sinusoid_dims", c.sinusoid_dims);
  get("local_width", c.local_width);
  get("point_hidden", c.point_hidden);
  get("decoder_hidden", c.decoder_hidden);
  get("decoder_hidden2", c.decoder_hidden2);
  get("shape_encoder_hidden", c.shape_encoder_hidden);
  get("width", d.width);
  get("num_blocks", d.num_blocks);
  get("num_skips", d.num_skips);
  get("heads", d.heads);
  get("head_dim", d.head_dim);
  get("token_count", d.token_count);
  get("pose_width", d.pose_width);
  get("mlp_ratio", d.mlp_ratio);
  get("head_gain", d.head_gain);
  return m;
}

std::string ModelConfig::structure_hash() const {
  nlohmann::json j = to_json();
  j.erase("init_seed");
  j.erase("head_gain");
  const std::string s = j.dump();
  const NoiseSchedule sched = make_linear_schedule(T(), beta_start, beta_end);
  return hex64(fnv1a(s.data(), s.size())) + "-" + schedule_hash(sched);
}

PoseDiffusionModel::PoseDiffusionModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  sched_ = make_linear_schedule(cfg_.T(), cfg_.beta_start, cfg_.beta_end);
  std::mt19937_64 rng(cfg_.init_seed);
  cond_ = ConditionNet(cfg_.conditioning, rng);
  denoiser_ = Denoiser(cfg_.denoiser, rng);
  cond_.collect(params_);
  denoiser_.collect(params_);
}

NormalizationContext PoseDiffusionModel::context_for(const ObservationBatch& obs) const {
  return make_context(obs.points, cfg_.norm_scale);
}

Prediction PoseDiffusionModel::predict(const ObservationBatch& obs, const InferenceOptions& opt) const {
  const NormalizationContext ctx = context_for(obs);
  return sample(cond_.encode_scene(obs, ctx), ctx, opt);
}

Prediction PoseDiffusionModel::sample(const SceneFeatures& scene, const NormalizationContext& ctx,
                                      const InferenceOptions& opt) const {
  const DdimPlan plan = make_ddim_plan(sched_, opt.steps, opt.eta);
  Prediction out;
  auto denoise_fn = [&](const PoseVec15& x, int t, const SceneFeatures& s) {
    ++out.denoiser_calls;
    const ConditionVector cv = cond_.assemble(cond_.embed_timestep(t), s, opt.mask);
    return denoiser_.denoise(x, cv.c, opt.denoise);
  };
  out.x0 = sample_loop(denoise_fn, scene, plan, sched_, opt.seed);
  out.pose = unflatten(out.x0, ctx);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, PoseDiffusionModel& model,
                     const CheckpointState& state) {
  const nn::ParamList& params = model.params();
  const bool with_opt = !state.first_moments.empty();
  if (with_opt && (state.first_moments.size() != params.size() ||
                   state.second_moments.size() != params.size()))
    fail(ErrorKind::Checkpoint, "optimizer state does not match the parameter list");

  nlohmann::json header;
  header["model"] = model.config().to_json();
  header["structure_hash"] = model.config().structure_hash();
  header["step"] = state.step;
  header["meta"] = state.meta;
  header["optimizer_steps"] = state.optimizer_steps;
  header["has_optimizer"] = with_opt;
  nlohmann::json manifest = nlohmann::json::array();
  for (const nn::Param* p : params) manifest.push_back({p->name, p->value.rows(), p->value.cols()});
  header["params"] = manifest;
  const std::string hs = header.dump();

  std::string payload;
  auto append = [&payload](const nn::Mat& m) {
    payload.append(reinterpret_cast<const char*>(m.data()),
                   static_cast<std::size_t>(m.size()) * sizeof(double));
  };
  for (const nn::Param* p : params) append(p->value);
  if (with_opt) {
    for (const auto& m : state.first_moments) append(m);
    for (const auto& m : state.second_moments) append(m);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Checkpoint, "cannot write checkpoint " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t hlen = hs.size();
    const std::uint64_t plen = payload.size();
    const std::uint64_t sum = fnv1a(payload.data(), payload.size(), fnv1a(hs.data(), hs.size()));
    os.write(kMagic, sizeof(kMagic));
    os.write(reinterpret_cast<const char*>(&version), sizeof(version));
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    os.write(reinterpret_cast<const char*>(&plen), sizeof(plen));
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    os.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
    if (!os) fail(ErrorKind::Checkpoint, "short write on checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

struct RawCheckpoint {
  nlohmann::json header;
  std::string payload;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Checkpoint, "cannot open checkpoint " + path.string());
  auto bad = [&path](const std::string& why) -> void {
    fail(ErrorKind::Checkpoint, "checkpoint " + path.string() + ": " + why);
  };
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  std::uint64_t plen = 0;
  std::uint64_t sum = 0;
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    bad("not a checkpoint file");
  if (!is.read(reinterpret_cast<char*>(&version), sizeof(version))) bad("truncated");
  if (version != kCheckpointVersion) bad("unsupported version " + std::to_string(version));
  if (!is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen)) || hlen > (1u << 26)) bad("truncated");
  std::string hs(hlen, '\0');
  if (!is.read(hs.data(), static_cast<std::streamsize>(hlen))) bad("truncated header");
  if (!is.read(reinterpret_cast<char*>(&plen), sizeof(plen))) bad("truncated");
  RawCheckpoint raw;
  raw.payload.resize(plen);
  if (!is.read(raw.payload.data(), static_cast<std::streamsize>(plen))) bad("truncated payload");
  if (!is.read(reinterpret_cast<char*>(&sum), sizeof(sum))) bad("missing checksum");
  if (sum != fnv1a(raw.payload.data(), raw.payload.size(), fnv1a(hs.data(), hs.size())))
    bad("checksum mismatch");
  try {
    raw.header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("corrupt header: ") + e.what());
  }
  return raw;
}

CheckpointState restore(const RawCheckpoint& raw, PoseDiffusionModel& model,
                        const std::filesystem::path& path) {
  const std::string expected = model.config().structure_hash();
  const std::string found = raw.header.at("structure_hash").get<std::string>();
  if (found != expected)
    fail(ErrorKind::Checkpoint, "checkpoint " + path.string() + " has structure " + found +
                                    ", model expects " + expected);
  const nn::ParamList& params = model.params();
  const auto& manifest = raw.header.at("params");
  if (manifest.size() != params.size())
    fail(ErrorKind::Checkpoint, "checkpoint parameter count mismatch");
  CheckpointState st;
  st.step = raw.header.at("step").get<long long>();
  st.meta = raw.header.value("meta", nlohmann::json::object());
  st.optimizer_steps = raw.header.value("optimizer_steps", 0LL);
  const bool with_opt = raw.header.value("has_optimizer", false);

  std::size_t offset = 0;
  auto take = [&](nn::Mat& m, Eigen::Index rows, Eigen::Index cols) {
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (offset + bytes > raw.payload.size())
      fail(ErrorKind::Checkpoint, "checkpoint payload too short");
    m.resize(rows, cols);
    std::memcpy(m.data(), raw.payload.data() + offset, bytes);
    offset += bytes;
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    nn::Param& p = *params[k];
    const auto& e = manifest[k];
    if (e[0].get<std::string>() != p.name || e[1].get<Eigen::Index>() != p.value.rows() ||
        e[2].get<Eigen::Index>() != p.value.cols())
      fail(ErrorKind::Checkpoint, "checkpoint parameter " + e[0].get<std::string>() +
                                      " does not match model parameter " + p.name);
    take(p.value, p.value.rows(), p.value.cols());
    p.zero_grad();
  }
  if (with_opt) {
    st.first_moments.resize(params.size());
    st.second_moments.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k)
      take(st.first_moments[k], params[k]->value.rows(), params[k]->value.cols());
    for (std::size_t k = 0; k < params.size(); ++k)
      take(st.second_moments[k], params[k]->value.rows(), params[k]->value.cols());
  }
  if (offset != raw.payload.size()) fail(ErrorKind::Checkpoint, "checkpoint has trailing data");
  return st;
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw(path);
  LoadedCheckpoint out;
  out.model = std::make_unique<PoseDiffusionModel>(ModelConfig::from_json(raw.header.at("model")));
  out.state = restore(raw, *out.model, path);
  return out;
}

CheckpointState load_checkpoint_into(const std::filesystem::path& path, PoseDiffusionModel& model) {
  return restore(read_raw(path), model, path);
}

}  // namespace posediff
