#include "ivope/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ivope/data.hpp"
#include "ivope/error.hpp"
#include "ivope/rng.hpp"

namespace ivope::features {

FeatureMap::FeatureMap(std::size_t dim, Fn fn, std::string descriptor)
    : dim_(dim), fn_(std::move(fn)), descriptor_(std::move(descriptor)) {
  if (dim_ == 0) throw InvalidArgument("feature map dimension must be positive");
}

Eigen::VectorXd FeatureMap::operator()(std::span<const double> state, std::size_t action) const {
  Eigen::VectorXd out(dim_);
  fn_(state, action, out);
  return out;
}

Eigen::VectorXd FeatureMap::operator()(double state, std::size_t action) const {
  return (*this)(std::span<const double>(&state, 1), action);
}

void FeatureMap::apply_into(std::span<const double> state, std::size_t action,
                            Eigen::Ref<Eigen::VectorXd> out) const {
  fn_(state, action, out);
}

FeatureMap gaussian_grid_features(std::size_t n_centers, double width) {
  if (n_centers == 0) throw InvalidArgument("n_centers must be at least 1");
  if (!(width > 0.0)) throw InvalidArgument("width must be positive");
  Eigen::VectorXd centers(n_centers);
  for (std::size_t j = 0; j < n_centers; ++j)
    centers(j) = -2.0 + (4.0 / static_cast<double>(n_centers)) * static_cast<double>(j);
  const double inv_w2 = 1.0 / (width * width);
  std::ostringstream desc;
  desc << "gaussian_grid(D=" << n_centers << ",width=" << data::format_real(width) << ")";
  return FeatureMap(
      n_centers,
      [centers, inv_w2](std::span<const double> state, std::size_t, Eigen::Ref<Eigen::VectorXd> out) {
        const double s = state[0];
        for (Eigen::Index j = 0; j < centers.size(); ++j) {
          const double d = s - centers(j);
          out(j) = std::exp(-d * d * inv_w2);
        }
      },
      desc.str());
}

RffSpec RffSpec::sample(std::size_t n_features, std::size_t input_dim, double bandwidth, std::uint64_t seed) {
  if (n_features == 0 || input_dim == 0) throw InvalidArgument("RFF needs positive feature and input dimensions");
  if (!(bandwidth > 0.0)) throw InvalidArgument("RFF bandwidth must be positive");
  RffSpec spec;
  spec.n_features = n_features;
  spec.input_dim = input_dim;
  spec.bandwidth = bandwidth;
  spec.seed = seed;
  spec.frequencies.resize(static_cast<Eigen::Index>(n_features), static_cast<Eigen::Index>(input_dim));
  spec.phases.resize(static_cast<Eigen::Index>(n_features));
  Rng rng = make_rng(seed, Stream::features);
  std::normal_distribution<double> normal(0.0, 1.0 / bandwidth);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (Eigen::Index k = 0; k < spec.frequencies.rows(); ++k) {
    for (Eigen::Index d = 0; d < spec.frequencies.cols(); ++d) spec.frequencies(k, d) = normal(rng);
    spec.phases(k) = phase(rng);
  }
  return spec;
}

FeatureMap rff_features(const RffSpec& spec) {
  if (static_cast<std::size_t>(spec.frequencies.rows()) != spec.n_features ||
      static_cast<std::size_t>(spec.frequencies.cols()) != spec.input_dim ||
      static_cast<std::size_t>(spec.phases.size()) != spec.n_features)
    throw InvalidArgument("RFF spec tables do not match its dimensions");
  const double scale = std::sqrt(2.0 / static_cast<double>(spec.n_features));
  std::ostringstream desc;
  desc << "rff(m=" << spec.n_features << ",bandwidth=" << data::format_real(spec.bandwidth) << ",seed=" << spec.seed
       << ")";
  return FeatureMap(
      spec.n_features,
      [w = spec.frequencies, b = spec.phases, scale](std::span<const double> state, std::size_t,
                                                     Eigen::Ref<Eigen::VectorXd> out) {
        if (static_cast<Eigen::Index>(state.size()) != w.cols())
          throw InvalidArgument("RFF input has wrong dimension");
        const Eigen::Map<const Eigen::VectorXd> x(state.data(), w.cols());
        out = scale * ((w * x + b).array().cos()).matrix();
      },
      desc.str());
}

double median_heuristic_bandwidth(const Eigen::MatrixXd& points, std::uint64_t seed, std::size_t subsample) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n < 2) throw InvalidArgument("median heuristic needs at least two points");
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (n > subsample) {
    Rng rng = make_rng(seed, Stream::features, 1);
    std::vector<std::size_t> picked;
    picked.reserve(subsample);
    std::sample(rows.begin(), rows.end(), std::back_inserter(picked), subsample, rng);
    rows = std::move(picked);
  }
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      dists.push_back((points.row(static_cast<Eigen::Index>(rows[i])) - points.row(static_cast<Eigen::Index>(rows[j])))
                          .norm());
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  const double median = *mid;
  if (!(median > 0.0)) throw InvalidArgument("median pairwise distance is zero");
  return median;
}

FeatureMap state_action_concat(const FeatureMap& state_encoder, std::size_t n_actions) {
  if (n_actions == 0) throw InvalidArgument("n_actions must be positive");
  const std::size_t sd = state_encoder.dim();
  return FeatureMap(
      sd + n_actions,
      [state_encoder, sd, n_actions](std::span<const double> state, std::size_t action,
                                     Eigen::Ref<Eigen::VectorXd> out) {
        if (action >= n_actions)
          throw InvalidArgument("action index " + std::to_string(action) + " out of range");
        const auto n = static_cast<Eigen::Index>(sd);
        Eigen::VectorXd head(n);
        state_encoder.apply_into(state, action, head);
        out.head(n) = head;
        out.tail(static_cast<Eigen::Index>(n_actions)).setZero();
        out(n + static_cast<Eigen::Index>(action)) = 1.0;
      },
      state_encoder.descriptor() + "+onehot(" + std::to_string(n_actions) + ")");
}

FeatureMap state_action_features(const FeatureMap& state_encoder, std::size_t n_actions) {
  if (n_actions == 1) return state_encoder;
  return state_action_concat(state_encoder, n_actions);
}

FeatureMap embed_states(const FeatureMap& inner, std::vector<double> positions) {
  return FeatureMap(
      inner.dim(),
      [inner, positions = std::move(positions)](std::span<const double> state, std::size_t action,
                                                Eigen::Ref<Eigen::VectorXd> out) {
        const auto idx = static_cast<std::size_t>(state[0]);
        if (idx >= positions.size()) throw InvalidArgument("state index out of range");
        const double pos = positions[idx];
        inner.apply_into(std::span<const double>(&pos, 1), action, out);
      },
      inner.descriptor());
}

FeatureMap tabular_features(const std::vector<bool>& terminal) {
  std::vector<std::ptrdiff_t> slot(terminal.size(), -1);
  std::ptrdiff_t live = 0;
  for (std::size_t s = 0; s < terminal.size(); ++s)
    if (!terminal[s]) slot[s] = live++;
  if (live == 0) throw InvalidArgument("tabular features need a non-terminal state");
  return FeatureMap(
      static_cast<std::size_t>(live),
      [slot](std::span<const double> state, std::size_t, Eigen::Ref<Eigen::VectorXd> out) {
        const auto idx = static_cast<std::size_t>(state[0]);
        if (idx >= slot.size()) throw InvalidArgument("state index out of range");
        out.setZero();
        if (slot[idx] >= 0) out(slot[idx]) = 1.0;
      },
      "tabular(" + std::to_string(live) + ")");
}

}  // namespace ivope::features
