#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lernr/feature_map.hpp"
#include "lernr/frame.hpp"
#include "lernr/query.hpp"

namespace lernr {

// ------------------------------------------------------------- map files
//
// Little-endian throughout.
//
//   offset  size        field
//   0       8           magic "LERNRMAP"
//   8       4   u32     version (1)
//   12      4   u32     size_M
//   16      8   f64     resolution (m)
//   24      4   u32     d_rnr
//   28      4   u32     d_clip
//   32      128 f64x16  origin, row-major
//   160     M*M*C f32   cells, row-major (y, x, channel)
//   ...     M*M f32     weight
//   ...     M*M u32     count
//   ...     M*M u8      occupancy (0 unknown, 1 free, 2 obstacle)

inline constexpr char kMapMagic[8] = {'L', 'E', 'R', 'N', 'R', 'M', 'A', 'P'};
inline constexpr std::uint32_t kMapFormatVersion = 1;
inline constexpr std::size_t kMapHeaderSize = 160;

struct MapFileHeader {
  std::uint32_t version = kMapFormatVersion;
  std::uint32_t size = 0;
  double resolution = 0;
  std::uint32_t d_rnr = 0;
  std::uint32_t d_clip = 0;
  std::array<double, 16> origin{};
};

// Returns the number of bytes written.
std::uint64_t save_map(const FeatureMap& map, std::ostream& out);
void save_map_file(const FeatureMap& map, const std::filesystem::path& path);
std::string map_to_bytes(const FeatureMap& map);

// Throws FormatError naming the byte offset of the first problem. For a
// truncated stream the offset is where the data ran out.
FeatureMap load_map(std::istream& in);
FeatureMap load_map_file(const std::filesystem::path& path);
FeatureMap map_from_bytes(std::string_view bytes);
MapFileHeader read_map_header(std::istream& in);

// ----------------------------------------------------------- depth rasters

enum class DepthEncoding { f32, png16 };

DepthEncoding depth_encoding_for(const std::filesystem::path& path);

// Raw little-endian float32 meters, row-major, no header.
DepthImage read_depth_f32(const std::filesystem::path& path, int width, int height);
void write_depth_f32(const std::filesystem::path& path, const DepthImage& depth);

// 16-bit grayscale PNG in millimetres; 0 marks invalid. meters = mm / 1000.
DepthImage read_depth_png16(const std::filesystem::path& path);
void write_depth_png16(const std::filesystem::path& path, const DepthImage& depth);

// ------------------------------------------------------------- trajectories
//
// JSONL manifest, one frame per line:
//   {"id": "...", "depth_path": "...", "depth_encoding": "f32"|"png16",
//    "intrinsics": {"fx":..,"fy":..,"cx":..,"cy":..,"w":..,"h":..},
//    "pose": [16 numbers, row-major camera-to-world],
//    "f_clip_ref": "...", "f_rnr_ref": "...", "labels": ["..."]}
// depth_path is relative to the manifest; depth_encoding defaults from the
// extension (.png -> png16, otherwise f32). Features are not attached here.

struct TrajectoryOptions {
  bool strict = true;  // lenient mode skips bad frames and tallies them
};

class TrajectoryReader {
 public:
  explicit TrajectoryReader(const std::filesystem::path& manifest, TrajectoryOptions options = {});

  // Next frame in manifest order, or nullopt at the end.
  std::optional<PosedFrame> next();

  std::size_t skipped() const { return errors_.size(); }
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  PosedFrame parse(const std::string& line, std::size_t line_no) const;

  std::filesystem::path base_;
  std::ifstream in_;
  TrajectoryOptions options_;
  std::size_t line_no_ = 0;
  std::vector<std::string> errors_;
};

std::vector<PosedFrame> load_trajectory(const std::filesystem::path& manifest, TrajectoryOptions options = {});

// Writes depth rasters under `dir`/depth and `dir`/manifest.jsonl; returns the
// manifest path.
std::filesystem::path write_trajectory(const std::filesystem::path& dir, std::span<const PosedFrame> frames,
                                       DepthEncoding encoding = DepthEncoding::f32);

// ----------------------------------------------------------------- heatmaps

enum class HeatmapFormat { csv, pgm };

HeatmapFormat parse_heatmap_format(std::string_view name);

// CSV: one row per y, raw scores printed with 17 significant digits, invalid
// cells left empty. PGM (P5): 8-bit, min-max normalized over valid cells
// (pixel = round(255 * (s - min) / (max - min)), 255 when max == min, 0 for
// invalid cells), with "# min=<v> max=<v>" recorded as a comment line.
std::string export_heatmap(const SimilarityField& field, HeatmapFormat format);

SimilarityField parse_heatmap_csv(std::string_view csv, FieldKind kind = FieldKind::cosine);

}  // namespace lernr
