#include "ivope/neural/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include "ivope/error.hpp"
#include "ivope/evaluation.hpp"
#include "ivope/nn/checkpoint.hpp"

namespace ivope::neural {

Eigen::VectorXd InputSpace::encode_state(std::size_t state) const {
  const double s = static_cast<double>(state);
  return state_encoder(std::span<const double>(&s, 1), 0);
}

Matrix InputSpace::q_input(const Matrix& x, const std::vector<std::size_t>& actions) const {
  if (static_cast<std::size_t>(x.cols()) != state_dim()) throw InvalidArgument("encoded states have wrong width");
  if (static_cast<Eigen::Index>(actions.size()) != x.rows()) throw InvalidArgument("action count differs from rows");
  if (n_actions <= 1) return x;
  Matrix out = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(input_dim()));
  out.leftCols(x.cols()) = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const std::size_t a = actions[static_cast<std::size_t>(i)];
    if (a >= n_actions) throw InvalidArgument("action index out of range");
    out(i, x.cols() + static_cast<Eigen::Index>(a)) = 1.0;
  }
  return out;
}

std::size_t InputSpace::nearest_state(const Eigen::Ref<const Eigen::VectorXd>& code) const {
  if (state_codes.empty()) throw InvalidArgument("input space has no tabular state codes");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < state_codes.size(); ++s) {
    const double d = (state_codes[s] - code).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = s;
    }
  }
  return best;
}

namespace {

InputSpace with_codes(features::FeatureMap encoder, const env::TabularMdp& mdp) {
  InputSpace space{std::move(encoder), mdp.n_actions(), {}};
  space.state_codes.reserve(mdp.n_states());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) space.state_codes.push_back(space.encode_state(s));
  return space;
}

}  // namespace

InputSpace positional_input_space(const env::TabularMdp& mdp) {
  std::vector<double> positions(mdp.n_states());
  for (std::size_t s = 0; s < mdp.n_states(); ++s) positions[s] = mdp.position(s);
  const features::FeatureMap identity(
      1, [](std::span<const double> x, std::size_t, Eigen::Ref<Eigen::VectorXd> out) { out(0) = x[0]; }, "position");
  return with_codes(features::embed_states(identity, std::move(positions)), mdp);
}

InputSpace one_hot_input_space(const env::TabularMdp& mdp) {
  const std::size_t n = mdp.n_states();
  const features::FeatureMap one_hot(
      n,
      [n](std::span<const double> x, std::size_t, Eigen::Ref<Eigen::VectorXd> out) {
        const auto s = static_cast<std::size_t>(x[0]);
        if (s >= n) throw InvalidArgument("state index out of range");
        out.setZero();
        out(static_cast<Eigen::Index>(s)) = 1.0;
      },
      "onehot_state(" + std::to_string(n) + ")");
  return with_codes(one_hot, mdp);
}

EncodedData EncodedData::gather(const std::vector<std::size_t>& rows) const {
  EncodedData out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.x.resize(n, x.cols());
  out.x_next.resize(n, x_next.cols());
  out.reward.resize(n);
  out.not_done.resize(n);
  out.states.reserve(rows.size());
  out.next_states.reserve(rows.size());
  out.actions.reserve(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t r = rows[static_cast<std::size_t>(i)];
    const auto ri = static_cast<Eigen::Index>(r);
    out.x.row(i) = x.row(ri);
    out.x_next.row(i) = x_next.row(ri);
    out.reward(i) = reward(ri);
    out.not_done(i) = not_done(ri);
    out.states.push_back(states[r]);
    out.next_states.push_back(next_states[r]);
    out.actions.push_back(actions[r]);
  }
  return out;
}

EncodedData encode(const data::TransitionDataset& dataset, const InputSpace& space) {
  EncodedData out;
  const auto n = static_cast<Eigen::Index>(dataset.size());
  const auto d = static_cast<Eigen::Index>(space.state_dim());
  Matrix xt(d, n);
  Matrix xnt(d, n);
  out.reward.resize(n);
  out.not_done.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    space.state_encoder.apply_into(dataset.state(r), 0, xt.col(i));
    space.state_encoder.apply_into(dataset.next_state(r), 0, xnt.col(i));
    out.states.push_back(dataset.state_index(r));
    out.next_states.push_back(dataset.next_state_index(r));
    out.actions.push_back(dataset.action(r));
    out.reward(i) = dataset.reward(r);
    out.not_done(i) = dataset.terminal(r) ? 0.0 : 1.0;
  }
  out.x = xt.transpose();
  out.x_next = xnt.transpose();
  return out;
}

BatchSampler::BatchSampler(std::size_t n_rows, std::size_t batch_size, std::uint64_t seed, std::uint64_t stream_index)
    : n_(n_rows), batch_(batch_size), rng_(make_rng(seed, Stream::minibatch, stream_index)), perm_(n_rows) {
  if (n_ == 0) throw InvalidArgument("cannot sample batches from an empty dataset");
  if (batch_ == 0) throw InvalidArgument("batch size must be positive");
  std::iota(perm_.begin(), perm_.end(), 0);
  if (batch_ < n_) reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(perm_.begin(), perm_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  if (batch_ >= n_) return perm_;
  if (cursor_ + batch_ > n_) reshuffle();
  std::vector<std::size_t> out(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               perm_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
  cursor_ += batch_;
  return out;
}

std::vector<std::size_t> sample_actions(const env::Policy& policy, const std::vector<std::size_t>& states,
                                        const Eigen::VectorXd& not_done, Rng& rng) {
  std::vector<std::size_t> out(states.size(), 0);
  for (std::size_t i = 0; i < states.size(); ++i)
    if (not_done(static_cast<Eigen::Index>(i)) != 0.0) out[i] = policy.sample(states[i], rng);
  return out;
}

NeuralQ::NeuralQ(InputSpace space, nn::Mlp net) : space_(std::move(space)), net_(std::move(net)) {
  if (net_.input_dim() != space_.input_dim()) throw InvalidArgument("Q network input does not match the input space");
  if (net_.output_dim() != 1) throw InvalidArgument("Q network must have a scalar output");
}

double NeuralQ::q(std::size_t state, std::size_t action) const {
  Matrix x = space_.encode_state(state).transpose();
  return net_.predict(space_.q_input(x, {action}))(0, 0);
}

Eigen::VectorXd NeuralQ::q_batch(const Matrix& x, const std::vector<std::size_t>& actions) const {
  return net_.predict(space_.q_input(x, actions)).col(0);
}

env::QTable NeuralQ::table(std::size_t n_states, std::size_t n_actions) const {
  env::QTable out(n_states, n_actions);
  Matrix x(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(space_.state_dim()));
  for (std::size_t s = 0; s < n_states; ++s) x.row(static_cast<Eigen::Index>(s)) = space_.encode_state(s).transpose();
  for (std::size_t a = 0; a < n_actions; ++a)
    out.col(static_cast<Eigen::Index>(a)) = q_batch(x, std::vector<std::size_t>(n_states, a));
  return out;
}

void NeuralQ::save(const std::filesystem::path& path) const { nn::save_mlp(net_, path); }

void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  out << "step,train_loss,valid_metric,value_estimate\n";
  for (const auto& p : curve)
    out << p.step << ',' << data::format_real(p.train_loss) << ',' << data::format_real(p.valid_metric) << ','
        << data::format_real(p.value_estimate) << '\n';
}

void save_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_curve_csv(curve, out);
}

nn::MlpSpec q_network_spec(const InputSpace& space, const CommonConfig& common) {
  nn::MlpSpec spec;
  spec.layer_sizes.push_back(space.input_dim());
  spec.layer_sizes.insert(spec.layer_sizes.end(), common.hidden.begin(), common.hidden.end());
  spec.layer_sizes.push_back(1);
  spec.activation = common.activation;
  spec.layer_norm = common.layer_norm && !common.hidden.empty();
  return spec;
}

double value_of(const NeuralQ& q, const Problem& problem) {
  if (problem.mdp == nullptr) return q.q(0, 0);
  return evaluation::estimate_policy_value([&q](std::size_t s, std::size_t a) { return q.q(s, a); }, *problem.mdp,
                                           problem.policy);
}

void require_finite(double loss, std::size_t step, const char* what) {
  if (!std::isfinite(loss)) throw TrainingAborted(std::string("non-finite ") + what, step);
}

}  // namespace ivope::neural
