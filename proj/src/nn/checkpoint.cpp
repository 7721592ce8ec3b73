#include "ivope/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ivope/error.hpp"

namespace ivope::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'I', 'V', 'O', 'P', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError(0, "truncated checkpoint");
  return v;
}

// Parameter shapes implied by the architecture, in Mlp::parameters() order.
std::vector<std::pair<Eigen::Index, Eigen::Index>> expected_shapes(const MlpSpec& spec) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  const auto& s = spec.layer_sizes;
  for (std::size_t l = 0; l + 1 < s.size(); ++l) {
    out.emplace_back(static_cast<Eigen::Index>(s[l]), static_cast<Eigen::Index>(s[l + 1]));
    out.emplace_back(1, static_cast<Eigen::Index>(s[l + 1]));
    if (l == 0 && spec.layer_norm) {
      out.emplace_back(1, static_cast<Eigen::Index>(s[1]));
      out.emplace_back(1, static_cast<Eigen::Index>(s[1]));
    }
  }
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& out, const MlpSpec& spec, const std::vector<Matrix>& values) {
  const auto shapes = expected_shapes(spec);
  if (shapes.size() != values.size()) throw InvalidArgument("checkpoint values do not match the architecture");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, spec.activation == Activation::relu ? 0 : 1);
  put<std::uint8_t>(out, spec.layer_norm ? 1 : 0);
  put<std::uint8_t>(out, spec.activate_output ? 1 : 0);
  put<std::uint64_t>(out, spec.layer_sizes.size());
  for (std::size_t s : spec.layer_sizes) put<std::uint64_t>(out, s);
  put<std::uint64_t>(out, values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Matrix& m = values[i];
    if (m.rows() != shapes[i].first || m.cols() != shapes[i].second)
      throw InvalidArgument("checkpoint tensor " + std::to_string(i) + " has the wrong shape");
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
  }
  if (!out) throw Error("failed writing checkpoint");
}

void write_checkpoint(std::ostream& out, const Mlp& net) { write_checkpoint(out, net.spec(), net.values()); }

CheckpointBlob read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw ParseError(0, "not a checkpoint (bad magic)");
  if (get<std::uint32_t>(in) != kVersion) throw ParseError(0, "unsupported checkpoint version");
  CheckpointBlob blob;
  const auto act = get<std::uint32_t>(in);
  if (act > 1) throw ParseError(0, "unknown activation code in checkpoint");
  blob.spec.activation = act == 0 ? Activation::relu : Activation::elu;
  blob.spec.layer_norm = get<std::uint8_t>(in) != 0;
  blob.spec.activate_output = get<std::uint8_t>(in) != 0;
  const auto n_sizes = get<std::uint64_t>(in);
  if (n_sizes < 2 || n_sizes > 64) throw ParseError(0, "implausible layer count in checkpoint");
  for (std::uint64_t i = 0; i < n_sizes; ++i) blob.spec.layer_sizes.push_back(get<std::uint64_t>(in));
  const auto shapes = expected_shapes(blob.spec);
  if (get<std::uint64_t>(in) != shapes.size()) throw ParseError(0, "tensor count disagrees with architecture");
  for (const auto& [rows, cols] : shapes) {
    if (static_cast<Eigen::Index>(get<std::uint64_t>(in)) != rows ||
        static_cast<Eigen::Index>(get<std::uint64_t>(in)) != cols)
      throw ParseError(0, "tensor shape disagrees with architecture");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get<double>(in);
    blob.values.push_back(std::move(m));
  }
  return blob;
}

Mlp mlp_from_checkpoint(const CheckpointBlob& blob) {
  Rng rng(0);
  Mlp net(blob.spec, rng);
  net.set_values(blob.values);
  return net;
}

void save_mlp(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, net);
}

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return mlp_from_checkpoint(read_checkpoint(in));
}

}  // namespace ivope::nn
