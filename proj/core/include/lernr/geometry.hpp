#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace lernr {

// Axis convention used throughout: the map plane spans X/Z and Y is height.
// Grid index x runs along X, grid index y runs along Z.

struct Cell {
  int x = 0;
  int y = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
};

// Rigid 4x4 transform. The rotation block is kept orthonormal with det = +1
// and the bottom row is exactly [0 0 0 1].
class RotoTranslation {
 public:
  static constexpr double kTolerance = 1e-9;

  RotoTranslation() : m_(Eigen::Matrix4d::Identity()) {}

  static RotoTranslation identity() { return {}; }

  // Throws InputError unless `m` is a rigid transform within kTolerance.
  static RotoTranslation from_matrix(const Eigen::Matrix4d& m);
  static RotoTranslation from_parts(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);
  static RotoTranslation from_row_major(std::span<const double> values);

  // Projects a nearly-rigid matrix (as read from text files with few digits)
  // onto SE(3). Throws InputError when the rotation block is further than
  // `tolerance` from orthonormal or anything is non-finite.
  static RotoTranslation nearest(const Eigen::Matrix4d& m, double tolerance = 1e-3);

  static RotoTranslation translation_only(const Eigen::Vector3d& t);

  const Eigen::Matrix4d& matrix() const { return m_; }
  Eigen::Matrix3d rotation() const { return m_.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return m_.topRightCorner<3, 1>(); }

  RotoTranslation inverse() const;
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation() * p + translation(); }
  std::array<double, 16> row_major() const;

  friend RotoTranslation operator*(const RotoTranslation& a, const RotoTranslation& b) {
    return RotoTranslation(a.m_ * b.m_);
  }

  friend bool operator==(const RotoTranslation& a, const RotoTranslation& b) { return a.m_ == b.m_; }

 private:
  explicit RotoTranslation(const Eigen::Matrix4d& m) : m_(m) {}

  Eigen::Matrix4d m_;
};

struct CameraIntrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
  int width = 0;
  int height = 0;

  void validate() const;
  // Pinhole intrinsics with the principal point at the image center.
  static CameraIntrinsics from_fov(int width, int height, double hfov_deg);
};

// Map layout. `origin` maps world coordinates into map coordinates and is
// recorded when the map is built.
struct GridSpec {
  int size = 256;
  double resolution = 0.1;
  RotoTranslation origin;

  void validate() const;
  bool contains(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < size && c.y < size; }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * size + c.x; }
  Cell cell_at(std::size_t index) const {
    return {static_cast<int>(index % size), static_cast<int>(index / size)};
  }
};

// Row-major depth raster in meters; 0 or non-finite marks an invalid pixel.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthImage() = default;
  DepthImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int u, int v) { return values[static_cast<std::size_t>(v) * width + u]; }
  float at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
};

struct WorldPoint {
  Eigen::Vector3d position;
  std::uint32_t pixel;  // v * width + u
};

// R_2D about the map normal by `alpha` radians plus t_2D = [x*res, 0, y*res].
RotoTranslation compose_rotation_2d(Cell cell, double alpha, const GridSpec& spec);

// origin^-1 * compose_rotation_2d(...): the world pose of a map cell.
RotoTranslation grid_to_world(Cell cell, double alpha, const GridSpec& spec);

// Cells are half-open [k*res, (k+1)*res). Returns nullopt outside the grid.
std::optional<Cell> world_to_grid(const Eigen::Vector3d& point, const GridSpec& spec);

// Heading (rotation about the map normal) encoded in a rotation block.
double extract_yaw(const RotoTranslation& t);

// Camera frame: x right, y down, z forward. `pose` maps camera to world.
std::vector<WorldPoint> backproject_depth(const DepthImage& depth, const CameraIntrinsics& intr,
                                          const RotoTranslation& pose);

}  // namespace lernr
