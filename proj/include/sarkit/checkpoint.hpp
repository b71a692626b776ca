#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "sarkit/config.hpp"
#include "sarkit/model.hpp"

namespace sarkit {

// Single-file model format: the 8-byte magic "SARKIT01", a little-endian
// uint64 header length, a JSON header (format version, training config,
// model shape, vocabulary, tag codebook, tensor manifest with byte offsets)
// and finally every tensor as raw little-endian float64.
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  SarModel model;
};

void save_checkpoint(std::ostream& out, SarModel& model, const TrainConfig& config);
void save_checkpoint(const std::filesystem::path& path, SarModel& model, const TrainConfig& config);
std::string checkpoint_bytes(SarModel& model, const TrainConfig& config);

Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sarkit
