#include "posediff/eval.hpp"

#include "posediff/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

namespace posediff {

OrientedBox3D box_from_pose(const Pose9D& pose) {
  OrientedBox3D box;
  box.center = pose.translation;
  box.axes = pose.rotation.matrix();
  box.extents = pose.size;
  for (int k = 0; k < 8; ++k) {
    const Vec3 sign((k & 1) ? 1.0 : -1.0, (k & 2) ? 1.0 : -1.0, (k & 4) ? 1.0 : -1.0);
    box.corners.row(k) = (box.center + box.axes * sign.cwiseProduct(box.extents / 2.0)).transpose();
  }
  return box;
}

namespace {

void aabb_of(const OrientedBox3D& b, Vec3& lo, Vec3& hi) {
  const Vec3 half = (b.axes.cwiseAbs() * b.extents) / 2.0;
  lo = lo.cwiseMin(b.center - half);
  hi = hi.cwiseMax(b.center + half);
}

// Points as columns (3 x n); marks which are inside the box.
void inside(const OrientedBox3D& b, const Eigen::Matrix3Xd& pts, std::vector<char>& out) {
  const Eigen::Matrix3Xd local = b.axes.transpose() * (pts.colwise() - b.center);
  const Vec3 half = b.extents / 2.0;
  out.resize(static_cast<std::size_t>(pts.cols()));
  for (Eigen::Index i = 0; i < pts.cols(); ++i)
    out[static_cast<std::size_t>(i)] = std::abs(local(0, i)) <= half.x() &&
                                       std::abs(local(1, i)) <= half.y() &&
                                       std::abs(local(2, i)) <= half.z();
}

double mc_iou(const OrientedBox3D& a, const OrientedBox3D& b, const Eigen::Matrix3Xd& unit) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  aabb_of(a, lo, hi);
  aabb_of(b, lo, hi);
  const Eigen::Matrix3Xd pts = (unit.array().colwise() * (hi - lo).array()).matrix().colwise() + lo;
  std::vector<char> in_a, in_b;
  inside(a, pts, in_a);
  inside(b, pts, in_b);
  long long na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < in_a.size(); ++i) {
    na += in_a[i];
    nb += in_b[i];
    both += in_a[i] & in_b[i];
  }
  const long long uni = na + nb - both;
  return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
}

}  // namespace

double iou3d(const OrientedBox3D& a, const OrientedBox3D& b, const std::optional<Vec3>& symmetry_axis,
             std::uint64_t seed, int samples) {
  if (samples < 1) fail(ErrorKind::InvalidInput, "iou3d needs at least one sample");
  if (!(a.volume() > 0.0) || !(b.volume() > 0.0)) {
    spdlog::warn("iou3d: zero-volume box, IoU taken as 0");
    return 0.0;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::Matrix3Xd unit(3, samples);
  for (int i = 0; i < samples; ++i)
    for (int d = 0; d < 3; ++d) unit(d, i) = u(rng);

  if (!symmetry_axis) return mc_iou(a, b, unit);
  const Vec3 world_axis = a.axes * symmetry_axis->normalized();
  double best = 0.0;
  for (int k = 0; k < kIouSymmetryRotations; ++k) {
    const double ang = 2.0 * std::numbers::pi * k / kIouSymmetryRotations;
    OrientedBox3D r = a;
    r.axes = Rotation3::about_axis(world_axis, ang).matrix() * a.axes;
    best = std::max(best, mc_iou(r, b, unit));
  }
  return best;
}

bool pose_hit(const Pose9D& pred, const Pose9D& gt, double deg, double cm, bool symmetric,
              const Vec3& symmetry_axis) {
  const double r = rotation_error_deg(pred.rotation, gt.rotation,
                                      symmetric ? std::optional<Vec3>(symmetry_axis) : std::nullopt);
  return r < deg && translation_error_cm(pred.translation, gt.translation) < cm;
}

const std::vector<std::string>& MetricValues::names() {
  static const std::vector<std::string> n = {"3D50", "3D75", "5deg2cm", "5deg5cm", "10deg2cm", "10deg5cm"};
  return n;
}

std::vector<double> MetricValues::values() const {
  return {iou50, iou75, deg5_cm2, deg5_cm5, deg10_cm2, deg10_cm5};
}

double fraction_hit(const std::vector<InstanceResult>& instances, double deg, double cm) {
  if (instances.empty()) return 0.0;
  const auto hits = std::count_if(instances.begin(), instances.end(), [&](const InstanceResult& r) {
    return r.rot_err_deg < deg && r.trans_err_cm < cm;
  });
  return static_cast<double>(hits) / static_cast<double>(instances.size());
}

namespace {

MetricValues metrics_of(const std::vector<InstanceResult>& inst) {
  MetricValues m;
  m.count = static_cast<int>(inst.size());
  if (inst.empty()) return m;
  const double n = static_cast<double>(inst.size());
  m.iou50 = std::count_if(inst.begin(), inst.end(), [](const auto& r) { return r.iou >= 0.5; }) / n;
  m.iou75 = std::count_if(inst.begin(), inst.end(), [](const auto& r) { return r.iou >= 0.75; }) / n;
  m.deg5_cm2 = fraction_hit(inst, 5.0, 2.0);
  m.deg5_cm5 = fraction_hit(inst, 5.0, 5.0);
  m.deg10_cm2 = fraction_hit(inst, 10.0, 2.0);
  m.deg10_cm5 = fraction_hit(inst, 10.0, 5.0);
  return m;
}

nlohmann::json metrics_json(const MetricValues& m) {
  nlohmann::json j;
  const auto v = m.values();
  for (std::size_t i = 0; i < v.size(); ++i) j[MetricValues::names()[i]] = v[i];
  j["count"] = m.count;
  return j;
}

}  // namespace

MetricsReport summarize(const std::vector<InstanceResult>& instances) {
  if (instances.empty()) fail(ErrorKind::InvalidInput, "cannot summarize an empty evaluation");
  MetricsReport rep;
  rep.instances = instances;
  rep.count = static_cast<int>(instances.size());
  std::map<std::string, std::vector<InstanceResult>> by_cat;
  std::vector<std::string> order;
  for (const auto& r : instances) {
    if (!by_cat.count(r.category)) order.push_back(r.category);
    by_cat[r.category].push_back(r);
  }
  for (const auto& c : order) {
    rep.categories.push_back(c);
    rep.per_category.push_back(metrics_of(by_cat[c]));
  }
  const double nc = static_cast<double>(rep.per_category.size());
  for (const auto& m : rep.per_category) {
    rep.mean.iou50 += m.iou50 / nc;
    rep.mean.iou75 += m.iou75 / nc;
    rep.mean.deg5_cm2 += m.deg5_cm2 / nc;
    rep.mean.deg5_cm5 += m.deg5_cm5 / nc;
    rep.mean.deg10_cm2 += m.deg10_cm2 / nc;
    rep.mean.deg10_cm5 += m.deg10_cm5 / nc;
  }
  rep.mean.count = rep.count;
  return rep;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["mean"] = metrics_json(mean);
  j["count"] = count;
  j["per_category"] = nlohmann::json::object();
  for (std::size_t i = 0; i < categories.size(); ++i) j["per_category"][categories[i]] = metrics_json(per_category[i]);
  return j;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "category";
  for (const auto& n : MetricValues::names()) os << "," << n;
  os << ",count\n" << std::setprecision(6);
  auto row = [&os](const std::string& name, const MetricValues& m) {
    os << name;
    for (double v : m.values()) os << "," << v;
    os << "," << m.count << "\n";
  };
  for (std::size_t i = 0; i < categories.size(); ++i) row(categories[i], per_category[i]);
  row("mean", mean);
  return os.str();
}

MetricsReport evaluate(const std::vector<SceneSample>& dataset, const Predictor& predictor,
                       const EvalOptions& opts) {
  if (dataset.empty()) fail(ErrorKind::InvalidInput, "evaluation dataset is empty");
  std::vector<InstanceResult> inst;
  inst.reserve(dataset.size());
  for (const auto& s : dataset) {
    const auto spec = std::find_if(opts.categories.begin(), opts.categories.end(),
                                   [&s](const CategorySpec& c) { return c.name == s.category; });
    if (spec == opts.categories.end()) fail(ErrorKind::Config, "unknown category '" + s.category + "' in " + s.scene_id);
    const Pose9D pred = predictor(s);
    InstanceResult r;
    r.scene_id = s.scene_id;
    r.category = s.category;
    r.rot_err_deg = rotation_error_deg(pred.rotation, s.gt_pose.rotation, spec->axis());
    r.trans_err_cm = translation_error_cm(pred.translation, s.gt_pose.translation);
    r.iou = iou3d(box_from_pose(pred), box_from_pose(s.gt_pose), spec->axis(), opts.iou_seed, opts.iou_samples);
    inst.push_back(r);
  }
  return summarize(inst);
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream js(dir / "report.json");
  std::ofstream csv(dir / "report.csv");
  if (!js || !csv) fail(ErrorKind::Config, "cannot write report files under " + dir.string());
  js << report.to_json().dump(2) << "\n";
  csv << report.to_csv();
}

Predictor random_pose_predictor(std::uint64_t seed, double size_lo, double size_hi) {
  return [seed, size_lo, size_hi](const SceneSample& s) {
    std::mt19937_64 rng(scene_seed(seed, s.scene_id));
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(size_lo, size_hi);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    Pose9D p;
    p.rotation = so3_project(q.toRotationMatrix());
    p.translation = s.points.cast<double>().colwise().mean().transpose();
    p.size = Vec3(u(rng), u(rng), u(rng));
    return p;
  };
}

Similarity umeyama_align(const Eigen::MatrixX3d& src, const Eigen::MatrixX3d& dst) {
  if (src.rows() != dst.rows()) fail(ErrorKind::Shape, "umeyama: point counts differ");
  if (src.rows() < 3) fail(ErrorKind::InvalidInput, "umeyama needs at least 3 points");
  const double n = static_cast<double>(src.rows());
  const Eigen::RowVector3d mu_s = src.colwise().mean();
  const Eigen::RowVector3d mu_d = dst.colwise().mean();
  const Eigen::MatrixX3d xs = src.rowwise() - mu_s;
  const Eigen::MatrixX3d xd = dst.rowwise() - mu_d;
  const Mat3 cov = xd.transpose() * xs / n;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0))
    fail(ErrorKind::DegenerateRotation, "umeyama: covariance rank < 2");
  Vec3 d = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d(2) = -1.0;
  const Mat3 R = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  const double var_s = xs.squaredNorm() / n;
  Similarity out;
  out.scale = sv.dot(d) / var_s;
  out.rotation = so3_project(R);
  out.translation = mu_d.transpose() - out.scale * (R * mu_s.transpose());
  return out;
}

}  // namespace posediff
