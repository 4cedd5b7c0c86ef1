#include "lernr/geometry.hpp"

#include <cmath>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "lernr/error.hpp"

namespace lernr {
namespace {

// Coordinates within this many cell widths below a boundary snap onto it
// (0.3 / 0.1 = 2.9999... lands in cell 3).
constexpr double kBoundarySnap = 1e-9;

bool all_finite(const Eigen::Matrix4d& m) { return m.allFinite(); }

double orthonormality_error(const Eigen::Matrix3d& r) {
  return (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

double floor_cells(double coord, double resolution) {
  const double q = coord / resolution;
  const double nearest = std::round(q);
  if (std::abs(q - nearest) <= kBoundarySnap) return nearest;
  return std::floor(q);
}

}  // namespace

RotoTranslation RotoTranslation::from_matrix(const Eigen::Matrix4d& m) {
  if (!all_finite(m)) throw InputError("transform has non-finite entries");
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0)
    throw InputError("transform bottom row must be [0 0 0 1]");
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  if (orthonormality_error(r) > kTolerance) throw InputError("rotation block is not orthonormal");
  if (std::abs(r.determinant() - 1.0) > kTolerance) throw InputError("rotation block determinant is not +1");
  return RotoTranslation(m);
}

RotoTranslation RotoTranslation::from_parts(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return from_matrix(m);
}

RotoTranslation RotoTranslation::from_row_major(std::span<const double> values) {
  if (values.size() != 16) throw InputError("transform needs 16 values, got " + std::to_string(values.size()));
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = values[static_cast<std::size_t>(r * 4 + c)];
  return from_matrix(m);
}

RotoTranslation RotoTranslation::nearest(const Eigen::Matrix4d& m, double tolerance) {
  if (!all_finite(m)) throw InputError("transform has non-finite entries");
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  if (orthonormality_error(r) > tolerance) throw InputError("rotation block is not orthonormal");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d projected = svd.matrixU() * svd.matrixV().transpose();
  if (projected.determinant() < 0) throw InputError("rotation block is a reflection");
  Eigen::Matrix4d out = Eigen::Matrix4d::Identity();
  out.topLeftCorner<3, 3>() = projected;
  out.topRightCorner<3, 1>() = m.topRightCorner<3, 1>();
  return RotoTranslation(out);
}

RotoTranslation RotoTranslation::translation_only(const Eigen::Vector3d& t) {
  if (!t.allFinite()) throw InputError("translation has non-finite entries");
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topRightCorner<3, 1>() = t;
  return RotoTranslation(m);
}

RotoTranslation RotoTranslation::inverse() const {
  const Eigen::Matrix3d rt = rotation().transpose();
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rt;
  m.topRightCorner<3, 1>() = -rt * translation();
  return RotoTranslation(m);
}

std::array<double, 16> RotoTranslation::row_major() const {
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(r * 4 + c)] = m_(r, c);
  return out;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw InputError("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InputError("image size must be positive");
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
    throw InputError("principal point must lie inside the image");
}

CameraIntrinsics CameraIntrinsics::from_fov(int width, int height, double hfov_deg) {
  const double f = (width / 2.0) / std::tan(hfov_deg * M_PI / 360.0);
  CameraIntrinsics intr{f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height};
  intr.validate();
  return intr;
}

void GridSpec::validate() const {
  if (size < 1) throw InputError("grid size must be at least 1");
  if (!(resolution > 0) || !std::isfinite(resolution)) throw InputError("grid resolution must be positive");
}

RotoTranslation compose_rotation_2d(Cell cell, double alpha, const GridSpec& spec) {
  if (!spec.contains(cell))
    throw BoundsError("cell (" + std::to_string(cell.x) + ", " + std::to_string(cell.y) + ") outside " +
                      std::to_string(spec.size) + "x" + std::to_string(spec.size) + " grid");
  const Eigen::Matrix3d r = Eigen::AngleAxisd(alpha, Eigen::Vector3d::UnitY()).toRotationMatrix();
  const Eigen::Vector3d t(cell.x * spec.resolution, 0.0, cell.y * spec.resolution);
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = t;
  return RotoTranslation::from_matrix(m);
}

RotoTranslation grid_to_world(Cell cell, double alpha, const GridSpec& spec) {
  return spec.origin.inverse() * compose_rotation_2d(cell, alpha, spec);
}

std::optional<Cell> world_to_grid(const Eigen::Vector3d& point, const GridSpec& spec) {
  if (!point.allFinite()) throw InputError("world point has non-finite coordinates");
  const Eigen::Vector3d p = spec.origin.apply(point);
  const double x = floor_cells(p.x(), spec.resolution);
  const double y = floor_cells(p.z(), spec.resolution);
  if (x < 0 || y < 0 || x >= spec.size || y >= spec.size) return std::nullopt;
  return Cell{static_cast<int>(x), static_cast<int>(y)};
}

double extract_yaw(const RotoTranslation& t) {
  const Eigen::Matrix4d& m = t.matrix();
  return std::atan2(m(0, 2), m(0, 0));
}

std::vector<WorldPoint> backproject_depth(const DepthImage& depth, const CameraIntrinsics& intr,
                                          const RotoTranslation& pose) {
  if (depth.width != intr.width || depth.height != intr.height)
    throw InputError("depth raster is " + std::to_string(depth.width) + "x" + std::to_string(depth.height) +
                     " but intrinsics declare " + std::to_string(intr.width) + "x" + std::to_string(intr.height));
  if (depth.values.size() != static_cast<std::size_t>(depth.width) * depth.height)
    throw InputError("depth raster has inconsistent storage");

  const Eigen::Matrix3d r = pose.rotation();
  const Eigen::Vector3d t = pose.translation();
  const double inv_fx = 1.0 / intr.fx;
  const double inv_fy = 1.0 / intr.fy;

  std::vector<WorldPoint> points;
  points.reserve(depth.values.size());
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const std::uint32_t pixel = static_cast<std::uint32_t>(v) * depth.width + u;
      const double d = depth.values[pixel];
      if (!(d > 0) || !std::isfinite(d)) continue;
      const Eigen::Vector3d cam((u - intr.cx) * d * inv_fx, (v - intr.cy) * d * inv_fy, d);
      points.push_back({r * cam + t, pixel});
    }
  }
  return points;
}

}  // namespace lernr
