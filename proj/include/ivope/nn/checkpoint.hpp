#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ivope/nn/mlp.hpp"

namespace ivope::nn {

/// Binary blob: magic "IVOPECKP", format version, architecture header
/// (activation, flags, layer sizes) and the parameter tensors as
/// little-endian float64, row-major.
void write_checkpoint(std::ostream& out, const MlpSpec& spec, const std::vector<Matrix>& values);
void write_checkpoint(std::ostream& out, const Mlp& net);

struct CheckpointBlob {
  MlpSpec spec;
  std::vector<Matrix> values;
};

CheckpointBlob read_checkpoint(std::istream& in);
Mlp mlp_from_checkpoint(const CheckpointBlob& blob);

void save_mlp(const Mlp& net, const std::filesystem::path& path);
Mlp load_mlp(const std::filesystem::path& path);

}  // namespace ivope::nn
