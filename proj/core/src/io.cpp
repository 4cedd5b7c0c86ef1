#include "lernr/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>
#include <png.h>

#include "lernr/error.hpp"

namespace lernr {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof(T));
  return v;
}

class LeWriter {
 public:
  explicit LeWriter(std::ostream& out) : out_(out) {}

  template <class T>
  void scalar(T v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
    raw(&v, sizeof(T));
  }

  template <class T>
  void array(std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
      raw(values.data(), values.size_bytes());
    } else {
      for (T v : values) scalar(v);
    }
  }

  void raw(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw Error("write failed after " + std::to_string(written_) + " bytes");
    written_ += n;
  }

  std::uint64_t written() const { return written_; }

 private:
  std::ostream& out_;
  std::uint64_t written_ = 0;
};

class LeReader {
 public:
  explicit LeReader(std::istream& in) : in_(in) {}

  void raw(void* data, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::uint64_t>(in_.gcount());
    if (got != n) throw FormatError(std::string("truncated ") + what, offset_ + got);
    offset_ += n;
  }

  template <class T>
  T scalar(const char* what) {
    T v;
    raw(&v, sizeof(T), what);
    if constexpr (std::endian::native == std::endian::big) v = byteswap_value(v);
    return v;
  }

  template <class T>
  void array(std::span<T> out, const char* what) {
    raw(out.data(), out.size_bytes(), what);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1)
      for (T& v : out) v = byteswap_value(v);
  }

  std::uint64_t offset() const { return offset_; }

  // Bytes left in the stream, when it is seekable.
  std::optional<std::uint64_t> remaining() {
    const std::streampos here = in_.tellg();
    if (here == std::streampos(-1)) return std::nullopt;
    in_.seekg(0, std::ios::end);
    const std::streampos end = in_.tellg();
    in_.seekg(here);
    if (end == std::streampos(-1) || !in_) {
      in_.clear();
      return std::nullopt;
    }
    return static_cast<std::uint64_t>(end - here);
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

constexpr std::uint32_t kMaxGridSize = 1u << 15;
constexpr std::uint32_t kMaxChannels = 1u << 16;

MapFileHeader read_header(LeReader& r) {
  char magic[8];
  r.raw(magic, 8, "magic");
  if (std::memcmp(magic, kMapMagic, 8) != 0) throw FormatError("bad magic, not a lernr map file", 0);
  MapFileHeader h;
  h.version = r.scalar<std::uint32_t>("version");
  if (h.version != kMapFormatVersion)
    throw FormatError("unsupported map format version " + std::to_string(h.version), 8);
  h.size = r.scalar<std::uint32_t>("size_M");
  if (h.size == 0 || h.size > kMaxGridSize) throw FormatError("grid size out of range", 12);
  h.resolution = r.scalar<double>("resolution");
  if (!(h.resolution > 0) || !std::isfinite(h.resolution)) throw FormatError("resolution must be positive", 16);
  h.d_rnr = r.scalar<std::uint32_t>("d_rnr");
  if (h.d_rnr == 0 || h.d_rnr > kMaxChannels) throw FormatError("d_rnr out of range", 24);
  h.d_clip = r.scalar<std::uint32_t>("d_clip");
  if (h.d_clip == 0 || h.d_clip > kMaxChannels) throw FormatError("d_clip out of range", 28);
  for (double& v : h.origin) v = r.scalar<double>("origin");
  return h;
}

}  // namespace

// ---------------------------------------------------------------- map files

std::uint64_t save_map(const FeatureMap& map, std::ostream& out) {
  LeWriter w(out);
  const GridSpec& spec = map.spec();
  w.raw(kMapMagic, 8);
  w.scalar<std::uint32_t>(kMapFormatVersion);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(spec.size));
  w.scalar<double>(spec.resolution);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(map.d_rnr()));
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(map.d_clip()));
  for (double v : spec.origin.row_major()) w.scalar<double>(v);
  w.array<float>(map.cells_data());
  w.array<float>(map.weights());
  w.array<std::uint32_t>(map.counts());
  const std::span<const Occupancy> occ = map.occupancy().cells();
  w.raw(occ.data(), occ.size());
  out.flush();
  return w.written();
}

void save_map_file(const FeatureMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  save_map(map, out);
}

std::string map_to_bytes(const FeatureMap& map) {
  std::ostringstream out(std::ios::binary);
  save_map(map, out);
  return std::move(out).str();
}

MapFileHeader read_map_header(std::istream& in) {
  LeReader r(in);
  return read_header(r);
}

FeatureMap load_map(std::istream& in) {
  LeReader r(in);
  const MapFileHeader h = read_header(r);

  GridSpec spec;
  spec.size = static_cast<int>(h.size);
  spec.resolution = h.resolution;
  try {
    spec.origin = RotoTranslation::from_row_major(h.origin);
  } catch (const InputError& e) {
    throw FormatError(std::string("invalid origin: ") + e.what(), 32);
  }

  const std::uint64_t cells = static_cast<std::uint64_t>(h.size) * h.size;
  const std::uint64_t body = cells * (static_cast<std::uint64_t>(h.d_rnr + h.d_clip) * 4 + 4 + 4 + 1);
  if (const auto remaining = r.remaining(); remaining && *remaining < body)
    throw FormatError("truncated map body", r.offset() + *remaining);

  FeatureMap map(spec, h.d_rnr, h.d_clip);
  r.array<float>(map.cells_data(), "cells");
  r.array<float>(map.weights(), "weights");
  r.array<std::uint32_t>(map.counts(), "counts");
  const std::uint64_t occupancy_offset = r.offset();
  std::span<Occupancy> occ = map.occupancy().cells();
  r.raw(occ.data(), occ.size(), "occupancy");
  for (std::size_t i = 0; i < occ.size(); ++i)
    if (static_cast<std::uint8_t>(occ[i]) > 2) throw FormatError("invalid occupancy value", occupancy_offset + i);
  if (!r.at_end()) throw FormatError("trailing bytes after map body", r.offset());
  return map;
}

FeatureMap load_map_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open map file " + path.string());
  return load_map(in);
}

FeatureMap map_from_bytes(std::string_view bytes) {
  std::istringstream in(std::string(bytes), std::ios::binary);
  return load_map(in);
}

// ------------------------------------------------------------ depth rasters

DepthEncoding depth_encoding_for(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" ? DepthEncoding::png16 : DepthEncoding::f32;
}

DepthImage read_depth_f32(const std::filesystem::path& path, int width, int height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open depth raster " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  const std::uint64_t expected = static_cast<std::uint64_t>(width) * height * 4;
  if (bytes != expected)
    throw InputError("depth raster " + path.string() + " holds " + std::to_string(bytes) + " bytes, expected " +
                     std::to_string(expected) + " for " + std::to_string(width) + "x" + std::to_string(height));
  DepthImage depth(width, height);
  LeReader r(in);
  r.array<float>(std::span<float>(depth.values), "depth");
  return depth;
}

void write_depth_f32(const std::filesystem::path& path, const DepthImage& depth) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  LeWriter(out).array<float>(depth.values);
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

DepthImage read_depth_png16(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw InputError("cannot open depth PNG " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  DepthImage depth;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("corrupt depth PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("depth PNG " + path.string() + " must be 16-bit grayscale");
  }
  depth = DepthImage(static_cast<int>(w), static_cast<int>(h));
  row.resize(static_cast<std::size_t>(w) * 2);
  for (png_uint_32 v = 0; v < h; ++v) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 u = 0; u < w; ++u) {
      const unsigned mm = (static_cast<unsigned>(row[u * 2]) << 8) | row[u * 2 + 1];  // PNG is big-endian
      depth.at(static_cast<int>(u), static_cast<int>(v)) = static_cast<float>(mm / 1000.0);
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return depth;
}

void write_depth_png16(const std::filesystem::path& path, const DepthImage& depth) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  std::vector<png_byte> row(static_cast<std::size_t>(depth.width) * 2);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed writing depth PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(depth.width), static_cast<png_uint_32>(depth.height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const float d = depth.at(u, v);
      const double mm = (d > 0 && std::isfinite(d)) ? std::min(65535.0, std::round(d * 1000.0)) : 0.0;
      const auto value = static_cast<unsigned>(mm);
      row[static_cast<std::size_t>(u) * 2] = static_cast<png_byte>(value >> 8);
      row[static_cast<std::size_t>(u) * 2 + 1] = static_cast<png_byte>(value & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ------------------------------------------------------------- trajectories

TrajectoryReader::TrajectoryReader(const std::filesystem::path& manifest, TrajectoryOptions options)
    : base_(manifest.parent_path()), in_(manifest), options_(options) {
  if (!in_) throw InputError("cannot open trajectory manifest " + manifest.string());
}

PosedFrame TrajectoryReader::parse(const std::string& line, std::size_t line_no) const {
  json entry;
  try {
    entry = json::parse(line);
  } catch (const json::exception& e) {
    throw FrameError("line " + std::to_string(line_no), std::string("malformed JSON: ") + e.what());
  }
  PosedFrame frame;
  frame.id = entry.value("id", "line " + std::to_string(line_no));
  try {
    const json& intr = entry.at("intrinsics");
    frame.intrinsics = {intr.at("fx").get<double>(), intr.at("fy").get<double>(), intr.at("cx").get<double>(),
                        intr.at("cy").get<double>(), intr.at("w").get<int>(),     intr.at("h").get<int>()};
    frame.intrinsics.validate();

    const auto pose = entry.at("pose").get<std::vector<double>>();
    if (pose.size() != 16) throw InputError("pose needs 16 values");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = pose[static_cast<std::size_t>(r * 4 + c)];
    if (!m.allFinite()) throw InputError("pose has non-finite entries");
    if (m(3, 0) != 0 || m(3, 1) != 0 || m(3, 2) != 0 || m(3, 3) != 1) throw InputError("pose bottom row must be [0 0 0 1]");
    frame.pose = RotoTranslation::nearest(m);

    const std::filesystem::path depth_path = base_ / entry.at("depth_path").get<std::string>();
    DepthEncoding encoding = depth_encoding_for(depth_path);
    if (entry.contains("depth_encoding")) {
      const std::string enc = entry.at("depth_encoding").get<std::string>();
      if (enc == "f32") encoding = DepthEncoding::f32;
      else if (enc == "png16") encoding = DepthEncoding::png16;
      else throw InputError("unknown depth_encoding '" + enc + "'");
    }
    if (encoding == DepthEncoding::f32) {
      frame.depth = read_depth_f32(depth_path, frame.intrinsics.width, frame.intrinsics.height);
    } else {
      frame.depth = read_depth_png16(depth_path);
      if (frame.depth.width != frame.intrinsics.width || frame.depth.height != frame.intrinsics.height)
        throw InputError("depth PNG is " + std::to_string(frame.depth.width) + "x" + std::to_string(frame.depth.height) +
                         " but intrinsics declare " + std::to_string(frame.intrinsics.width) + "x" +
                         std::to_string(frame.intrinsics.height));
    }
    frame.clip_ref = entry.value("f_clip_ref", std::string{});
    frame.rnr_ref = entry.value("f_rnr_ref", std::string{});
    frame.labels = entry.value("labels", std::vector<std::string>{});
  } catch (const FrameError&) {
    throw;
  } catch (const Error& e) {
    throw FrameError(frame.id, e.what());
  } catch (const json::exception& e) {
    throw FrameError(frame.id, e.what());
  }
  return frame;
}

std::optional<PosedFrame> TrajectoryReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (trim(line).empty()) continue;
    try {
      return parse(line, line_no_);
    } catch (const FrameError& e) {
      if (options_.strict) throw;
      errors_.push_back(e.what());
    }
  }
  return std::nullopt;
}

std::vector<PosedFrame> load_trajectory(const std::filesystem::path& manifest, TrajectoryOptions options) {
  TrajectoryReader reader(manifest, options);
  std::vector<PosedFrame> frames;
  while (std::optional<PosedFrame> f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

std::filesystem::path write_trajectory(const std::filesystem::path& dir, std::span<const PosedFrame> frames,
                                       DepthEncoding encoding) {
  std::filesystem::create_directories(dir / "depth");
  const std::filesystem::path manifest = dir / "manifest.jsonl";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw Error("cannot write " + manifest.string());
  for (const PosedFrame& f : frames) {
    const std::string name = "depth/" + f.id + (encoding == DepthEncoding::png16 ? ".png" : ".f32");
    if (encoding == DepthEncoding::png16)
      write_depth_png16(dir / name, f.depth);
    else
      write_depth_f32(dir / name, f.depth);
    json entry{{"id", f.id},
               {"depth_path", name},
               {"depth_encoding", encoding == DepthEncoding::png16 ? "png16" : "f32"},
               {"intrinsics",
                {{"fx", f.intrinsics.fx},
                 {"fy", f.intrinsics.fy},
                 {"cx", f.intrinsics.cx},
                 {"cy", f.intrinsics.cy},
                 {"w", f.intrinsics.width},
                 {"h", f.intrinsics.height}}},
               {"pose", f.pose.row_major()}};
    if (!f.clip_ref.empty()) entry["f_clip_ref"] = f.clip_ref;
    if (!f.rnr_ref.empty()) entry["f_rnr_ref"] = f.rnr_ref;
    if (!f.labels.empty()) entry["labels"] = f.labels;
    out << entry.dump() << '\n';
  }
  return manifest;
}

// ----------------------------------------------------------------- heatmaps

HeatmapFormat parse_heatmap_format(std::string_view name) {
  if (name == "csv") return HeatmapFormat::csv;
  if (name == "pgm") return HeatmapFormat::pgm;
  throw InputError("unknown heatmap format '" + std::string(name) + "'");
}

std::string export_heatmap(const SimilarityField& field, HeatmapFormat format) {
  const int n = field.size();
  std::string out;
  char buf[64];
  if (format == HeatmapFormat::csv) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (x > 0) out += ',';
        if (field.valid(Cell{x, y})) {
          std::snprintf(buf, sizeof buf, "%.17g", field.score(Cell{x, y}));
          out += buf;
        }
      }
      out += '\n';
    }
    return out;
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < field.cell_count(); ++i) {
    if (!field.valid(i)) continue;
    lo = std::min(lo, field.score(i));
    hi = std::max(hi, field.score(i));
  }
  if (field.valid_count() == 0) lo = hi = 0;
  out = "P5\n";
  std::snprintf(buf, sizeof buf, "# min=%.17g max=%.17g\n", lo, hi);
  out += buf;
  out += std::to_string(n) + " " + std::to_string(n) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + field.cell_count(), '\0');
  for (std::size_t i = 0; i < field.cell_count(); ++i) {
    if (!field.valid(i)) continue;
    const double v = hi > lo ? std::round(255.0 * (field.score(i) - lo) / (hi - lo)) : 255.0;
    out[header + i] = static_cast<char>(static_cast<unsigned char>(v));
  }
  return out;
}

SimilarityField parse_heatmap_csv(std::string_view csv, FieldKind kind) {
  std::vector<std::vector<std::string_view>> rows;
  while (!csv.empty()) {
    const std::size_t nl = csv.find('\n');
    std::string_view line = csv.substr(0, nl);
    csv.remove_prefix(nl == std::string_view::npos ? csv.size() : nl + 1);
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cols.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cols));
  }
  const int n = static_cast<int>(rows.size());
  SimilarityField field(n, kind);
  for (int y = 0; y < n; ++y) {
    if (static_cast<int>(rows[static_cast<std::size_t>(y)].size()) != n)
      throw InputError("heatmap CSV row " + std::to_string(y) + " has the wrong column count");
    for (int x = 0; x < n; ++x) {
      const std::string_view cell = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
      if (cell.empty()) continue;
      field.set(Cell{x, y}, std::stod(std::string(cell)));
    }
  }
  return field;
}

}  // namespace lernr
