#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cosrec/encoder.hpp"

namespace cosrec {

// Flat binary parameter container: a text manifest naming every tensor with
// its shape and byte offset, followed by one little-endian float64 blob.
// Round trips are bit exact. The config echo line travels with the tensors so
// a checkpoint is self-describing.

struct Checkpoint {
  std::string config_echo;
  ModelConfig model;
  EncoderParams params;
};

void save_checkpoint(const std::string& path, const EncoderParams& params,
                     const ModelConfig& model, const std::string& config_echo);
Checkpoint load_checkpoint(const std::string& path);

// Stable enumeration of (name, tensor) pairs; scalars ride as 1x1 entries.
std::vector<std::pair<std::string, const Matrix*>> tensor_entries(const EncoderParams& p);

}  // namespace cosrec
