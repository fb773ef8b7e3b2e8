#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "linea/geometry.hpp"
#include "linea/rng.hpp"
#include "linea/tensor.hpp"

namespace linea {

// One synthetic image with its exact line annotations. Values in [0,1];
// endpoints normalized and stored at 9 significant decimal digits so that
// text round-trips are exact.
struct DatasetRecord {
  FeatureMap image;
  std::vector<LineSegment> lines;
  std::string id;
};

// Deterministic generator: record i derives all of its randomness from
// (seed, stream=i), so generation may be parallelized per record without
// changing results. Each image holds 1..max_lines anti-aliased strokes of
// random intensity in [0.5, 1] with normalized length >= 0.2, on a uniform
// noise background of amplitude 0.1.
std::vector<DatasetRecord> gen_synthetic(std::size_t n, std::size_t height, std::size_t width,
                                         std::size_t max_lines, std::uint64_t seed);

// Train-time augmentation: horizontal/vertical flips and intensity jitter,
// annotations transformed consistently with pixels.
DatasetRecord augment_record(const DatasetRecord& record, CounterRng& rng);

// Directory layout: manifest.json index; one raw image file per record
// (magic "LNIMG1", u32 C/H/W little-endian, C*H*W little-endian f32).
// Annotations live in the manifest as decimal text with 9 significant
// digits. All multi-byte integers little-endian.
void save_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& dir);
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& dir);

struct CheckpointEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset;  // in f32 elements from blob start
};

// Model parameters: a JSON manifest (format version, preset, parameter
// inventory) followed by a contiguous little-endian f32 blob. Offsets must
// cover the blob exactly with no gaps.
struct Checkpoint {
  std::string preset;
  std::vector<CheckpointEntry> inventory;
  std::vector<float> blob;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

// Formats a double as decimal text with 9 significant digits.
std::string format_g9(double v);

}  // namespace linea
