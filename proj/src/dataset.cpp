#include "linea/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace linea {

namespace {

constexpr char kImageMagic[6] = {'L', 'N', 'I', 'M', 'G', '1'};
constexpr char kCheckpointMagic[8] = {'L', 'N', 'C', 'K', 'P', 'T', '1', '\n'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float bits_to_f32(std::uint32_t bits) {
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

// Distance from a point to a segment, all in pixel coordinates.
double point_segment_distance(double px, double py, double x1, double y1, double x2, double y2) {
  const double dx = x2 - x1, dy = y2 - y1;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - x1) * dx + (py - y1) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = x1 + t * dx, cy = y1 + t * dy;
  return std::hypot(px - cx, py - cy);
}

}  // namespace

std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<DatasetRecord> gen_synthetic(std::size_t n, std::size_t height, std::size_t width,
                                         std::size_t max_lines, std::uint64_t seed) {
  if (height < 16 || width < 16) {
    throw ConfigError("gen_synthetic: size must be at least 16x16");
  }
  if (max_lines < 1) throw ConfigError("gen_synthetic: max_lines must be >= 1");

  std::vector<DatasetRecord> records(n);
  for (std::size_t r = 0; r < n; ++r) {
    CounterRng rng(seed, r);
    DatasetRecord& rec = records[r];
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "rec_%06zu", r);
    rec.id = idbuf;
    rec.image = FeatureMap(1, height, width);

    double* px = rec.image.plane(0);
    for (std::size_t i = 0; i < height * width; ++i) px[i] = rng.uniform(0.0, 0.1);

    const std::size_t n_lines = static_cast<std::size_t>(rng.uniform_int(1, max_lines));
    for (std::size_t li = 0; li < n_lines; ++li) {
      LineSegment seg;
      do {
        seg.ep1 = {rng.next_unit(), rng.next_unit()};
        seg.ep2 = {rng.next_unit(), rng.next_unit()};
      } while (std::hypot(seg.ep1.x - seg.ep2.x, seg.ep1.y - seg.ep2.y) < 0.2);
      // Freeze annotations at their 9-significant-digit text representation
      // so that save/load round trips are exact.
      seg.ep1.x = std::strtod(format_g9(seg.ep1.x).c_str(), nullptr);
      seg.ep1.y = std::strtod(format_g9(seg.ep1.y).c_str(), nullptr);
      seg.ep2.x = std::strtod(format_g9(seg.ep2.x).c_str(), nullptr);
      seg.ep2.y = std::strtod(format_g9(seg.ep2.y).c_str(), nullptr);
      const double intensity = rng.uniform(0.5, 1.0);

      const double x1 = seg.ep1.x * width - 0.5, y1 = seg.ep1.y * height - 0.5;
      const double x2 = seg.ep2.x * width - 0.5, y2 = seg.ep2.y * height - 0.5;
      const long min_x = std::max(0L, static_cast<long>(std::floor(std::min(x1, x2))) - 2);
      const long max_x = std::min(static_cast<long>(width) - 1,
                                  static_cast<long>(std::ceil(std::max(x1, x2))) + 2);
      const long min_y = std::max(0L, static_cast<long>(std::floor(std::min(y1, y2))) - 2);
      const long max_y = std::min(static_cast<long>(height) - 1,
                                  static_cast<long>(std::ceil(std::max(y1, y2))) + 2);
      for (long y = min_y; y <= max_y; ++y) {
        for (long x = min_x; x <= max_x; ++x) {
          const double d = point_segment_distance(x, y, x1, y1, x2, y2);
          const double coverage = std::clamp(1.2 - d, 0.0, 1.0);  // ~1px anti-aliased stroke
          if (coverage > 0.0) {
            double& v = px[y * width + x];
            v = std::min(1.0, v + intensity * coverage);
          }
        }
      }
      rec.lines.push_back(seg);
    }
  }
  return records;
}

DatasetRecord augment_record(const DatasetRecord& record, CounterRng& rng) {
  DatasetRecord out = record;
  const bool hflip = rng.next_unit() < 0.5;
  const bool vflip = rng.next_unit() < 0.5;
  const double gain = rng.uniform(0.8, 1.2);
  const std::size_t h = out.image.height, w = out.image.width;
  for (std::size_t c = 0; c < out.image.channels; ++c) {
    const double* src = record.image.plane(c);
    double* dst = out.image.plane(c);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t sy = vflip ? h - 1 - y : y;
        const std::size_t sx = hflip ? w - 1 - x : x;
        dst[y * w + x] = std::clamp(src[sy * w + sx] * gain, 0.0, 1.0);
      }
    }
  }
  for (auto& seg : out.lines) {
    if (hflip) {
      seg.ep1.x = 1.0 - seg.ep1.x;
      seg.ep2.x = 1.0 - seg.ep2.x;
    }
    if (vflip) {
      seg.ep1.y = 1.0 - seg.ep1.y;
      seg.ep2.y = 1.0 - seg.ep2.y;
    }
  }
  return out;
}

void save_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "linea-dataset";
  manifest["version"] = 1;
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& rec : records) {
    const std::string image_file = rec.id + ".img";
    nlohmann::json lines = nlohmann::json::array();
    for (const auto& seg : rec.lines) {
      lines.push_back({format_g9(seg.ep1.x), format_g9(seg.ep1.y), format_g9(seg.ep2.x),
                       format_g9(seg.ep2.y)});
    }
    recs.push_back({{"id", rec.id}, {"image", image_file}, {"lines", lines}});

    std::ofstream img(dir / image_file, std::ios::binary);
    if (!img) throw IoError(IoError::Kind::NotFound, "cannot write " + (dir / image_file).string());
    img.write(kImageMagic, sizeof kImageMagic);
    put_u32(img, static_cast<std::uint32_t>(rec.image.channels));
    put_u32(img, static_cast<std::uint32_t>(rec.image.height));
    put_u32(img, static_cast<std::uint32_t>(rec.image.width));
    for (std::size_t i = 0; i < rec.image.values.size(); ++i) {
      put_f32(img, static_cast<float>(rec.image.values[i]));
    }
  }
  manifest["records"] = std::move(recs);
  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw IoError(IoError::Kind::NotFound, "cannot write manifest in " + dir.string());
  mf << manifest.dump(2) << "\n";
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError(IoError::Kind::NotFound, "no manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::Malformed, "manifest.json: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "linea-dataset") {
    throw IoError(IoError::Kind::Malformed, "manifest.json: not a linea-dataset index");
  }
  if (manifest.value("version", -1) != 1) {
    throw IoError(IoError::Kind::VersionMismatch,
                  "manifest.json: unsupported dataset version " +
                      manifest.value("version", nlohmann::json()).dump());
  }

  std::vector<DatasetRecord> records;
  for (const auto& jrec : manifest.at("records")) {
    DatasetRecord rec;
    rec.id = jrec.at("id").get<std::string>();
    const std::filesystem::path img_path = dir / jrec.at("image").get<std::string>();
    std::ifstream img(img_path, std::ios::binary);
    if (!img) throw IoError(IoError::Kind::NotFound, "record " + rec.id + ": missing image file");
    char magic[6];
    img.read(magic, 6);
    if (img.gcount() != 6 || std::memcmp(magic, "LNIMG", 5) != 0) {
      throw IoError(IoError::Kind::BadMagic, "record " + rec.id + ": bad image magic");
    }
    if (magic[5] != '1') {
      throw IoError(IoError::Kind::VersionMismatch,
                    "record " + rec.id + ": unsupported image format version");
    }
    const std::uint32_t c = get_u32(img), h = get_u32(img), w = get_u32(img);
    if (!img) throw IoError(IoError::Kind::Truncated, "record " + rec.id + ": truncated header");
    rec.image = FeatureMap(c, h, w);
    for (std::size_t i = 0; i < rec.image.values.size(); ++i) {
      const std::uint32_t bits = get_u32(img);
      if (!img) {
        throw IoError(IoError::Kind::Truncated, "record " + rec.id + ": truncated image payload");
      }
      rec.image.values[i] = bits_to_f32(bits);
    }
    for (const auto& jline : jrec.at("lines")) {
      LineSegment seg;
      seg.ep1.x = std::strtod(jline.at(0).get<std::string>().c_str(), nullptr);
      seg.ep1.y = std::strtod(jline.at(1).get<std::string>().c_str(), nullptr);
      seg.ep2.x = std::strtod(jline.at(2).get<std::string>().c_str(), nullptr);
      seg.ep2.y = std::strtod(jline.at(3).get<std::string>().c_str(), nullptr);
      rec.lines.push_back(seg);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file) {
  std::size_t expected = 0;
  for (const auto& e : ckpt.inventory) {
    if (e.offset != expected) {
      throw IoError(IoError::Kind::Malformed,
                    "checkpoint inventory has a gap before parameter " + e.name);
    }
    expected += Tensor::count(e.shape);
  }
  if (expected != ckpt.blob.size()) {
    throw IoError(IoError::Kind::Malformed, "checkpoint inventory does not cover blob");
  }

  nlohmann::json header;
  header["format_version"] = 1;
  header["preset"] = ckpt.preset;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : ckpt.inventory) {
    params.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
  }
  header["params"] = std::move(params);
  const std::string header_str = header.dump();

  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError(IoError::Kind::NotFound, "cannot write " + file.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64(out, header_str.size());
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (float v : ckpt.blob) put_f32(out, v);
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::NotFound, "cannot open " + file.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, "LNCKPT", 6) != 0) {
    throw IoError(IoError::Kind::BadMagic, file.string() + ": bad checkpoint magic");
  }
  if (magic[6] != '1') {
    throw IoError(IoError::Kind::VersionMismatch,
                  file.string() + ": unsupported checkpoint version");
  }
  const std::uint64_t header_len = get_u64(in);
  if (!in) throw IoError(IoError::Kind::Truncated, file.string() + ": truncated header length");
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(in.gcount()) != header_len) {
    throw IoError(IoError::Kind::Truncated, file.string() + ": truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::Malformed, file.string() + ": header: " + e.what());
  }
  if (header.value("format_version", -1) != 1) {
    throw IoError(IoError::Kind::VersionMismatch, file.string() + ": unsupported format_version");
  }

  Checkpoint ckpt;
  ckpt.preset = header.value("preset", "");
  std::size_t total = 0;
  for (const auto& jp : header.at("params")) {
    CheckpointEntry e;
    e.name = jp.at("name").get<std::string>();
    e.shape = jp.at("shape").get<std::vector<std::size_t>>();
    e.offset = jp.at("offset").get<std::size_t>();
    if (e.offset != total) {
      throw IoError(IoError::Kind::Malformed,
                    file.string() + ": inventory gap before parameter " + e.name);
    }
    total += Tensor::count(e.shape);
    ckpt.inventory.push_back(std::move(e));
  }
  ckpt.blob.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::uint32_t bits = get_u32(in);
    if (!in) throw IoError(IoError::Kind::Truncated, file.string() + ": truncated parameter blob");
    ckpt.blob[i] = bits_to_f32(bits);
  }
  return ckpt;
}

}  // namespace linea
