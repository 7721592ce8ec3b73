#include "ivope/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ivope/error.hpp"

namespace ivope::data {

TransitionDataset::TransitionDataset(std::size_t state_dim, std::uint64_t seed, std::string source)
    : state_dim_(state_dim), seed_(seed), source_(std::move(source)) {
  if (state_dim_ == 0) throw InvalidArgument("state_dim must be positive");
}

void TransitionDataset::push_back(std::span<const double> state, std::size_t action, double reward,
                                  std::span<const double> next_state, bool terminal) {
  if (state.size() != state_dim_ || next_state.size() != state_dim_)
    throw InvalidArgument("state encoding has wrong dimension");
  if (!std::isfinite(reward)) throw InvalidArgument("reward must be finite");
  states_.insert(states_.end(), state.begin(), state.end());
  next_states_.insert(next_states_.end(), next_state.begin(), next_state.end());
  actions_.push_back(action);
  rewards_.push_back(reward);
  terminals_.push_back(terminal ? 1 : 0);
}

void TransitionDataset::push_back(const Transition& t) {
  push_back(t.state, t.action, t.reward, t.next_state, t.terminal);
}

void TransitionDataset::reserve(std::size_t n) {
  states_.reserve(n * state_dim_);
  next_states_.reserve(n * state_dim_);
  actions_.reserve(n);
  rewards_.reserve(n);
  terminals_.reserve(n);
}

std::span<const double> TransitionDataset::state(std::size_t i) const {
  return std::span<const double>(states_).subspan(i * state_dim_, state_dim_);
}

std::span<const double> TransitionDataset::next_state(std::size_t i) const {
  return std::span<const double>(next_states_).subspan(i * state_dim_, state_dim_);
}

Transition TransitionDataset::row(std::size_t i) const {
  const auto s = state(i);
  const auto sp = next_state(i);
  return Transition{{s.begin(), s.end()}, actions_[i], rewards_[i], {sp.begin(), sp.end()}, terminals_[i] != 0};
}

std::size_t TransitionDataset::state_index(std::size_t i) const {
  if (state_dim_ != 1) throw InvalidArgument("state_index requires a tabular dataset");
  return static_cast<std::size_t>(states_[i]);
}

std::size_t TransitionDataset::next_state_index(std::size_t i) const {
  if (state_dim_ != 1) throw InvalidArgument("next_state_index requires a tabular dataset");
  return static_cast<std::size_t>(next_states_[i]);
}

TransitionDataset TransitionDataset::subset(std::span<const std::size_t> rows) const {
  TransitionDataset out(state_dim_, seed_, source_);
  out.reserve(rows.size());
  for (std::size_t i : rows) out.push_back(state(i), actions_.at(i), rewards_[i], next_state(i), terminal(i));
  return out;
}

bool TransitionDataset::same_rows(const TransitionDataset& other) const {
  return state_dim_ == other.state_dim_ && states_ == other.states_ && next_states_ == other.next_states_ &&
         actions_ == other.actions_ && rewards_ == other.rewards_ && terminals_ == other.terminals_;
}

TransitionDataset generate_episodes(const env::TabularMdp& mdp, const env::Policy& policy,
                                    std::size_t n_transitions, std::uint64_t seed) {
  if (n_transitions == 0) throw InvalidArgument("n_transitions must be at least 1");
  Rng transitions = make_rng(seed, Stream::transitions);
  TransitionDataset out(1, seed, "episodes");
  out.reserve(n_transitions);
  while (out.size() < n_transitions) {
    std::size_t s = mdp.sample_initial(transitions);
    while (!mdp.is_terminal(s) && out.size() < n_transitions) {
      const std::size_t a = policy.sample(s, transitions);
      const std::size_t next = mdp.sample_next(s, a, transitions);
      const double cur = static_cast<double>(s);
      const double nxt = static_cast<double>(next);
      out.push_back(std::span<const double>(&cur, 1), a, mdp.reward(s, a), std::span<const double>(&nxt, 1),
                    mdp.is_terminal(next));
      s = next;
    }
  }
  return out;
}

TransitionDataset generate_chain_dataset(const env::TabularMdp& mdp, std::size_t n_transitions, std::uint64_t seed) {
  return generate_episodes(mdp, env::chain_policy(mdp), n_transitions, seed);
}

std::vector<double> shifted_state_weights(const env::TabularMdp& mdp, double alpha) {
  std::vector<double> logits;
  std::vector<std::size_t> live;
  for (std::size_t s = 0; s < mdp.n_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    live.push_back(s);
    logits.push_back(alpha * mdp.position(s));
  }
  if (live.empty()) throw InvalidArgument("MDP has no non-terminal states");
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> weights(mdp.n_states(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < live.size(); ++k) {
    weights[live[k]] = std::exp(logits[k] - peak);
    total += weights[live[k]];
  }
  for (double& w : weights) w /= total;
  return weights;
}

TransitionDataset resample_shifted(const env::TabularMdp& mdp, const env::Policy& policy, double alpha,
                                   std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("n must be at least 1");
  const auto weights = shifted_state_weights(mdp, alpha);
  std::discrete_distribution<std::size_t> draw_state(weights.begin(), weights.end());
  Rng state_rng = make_rng(seed, Stream::shifted_states);
  Rng transitions = make_rng(seed, Stream::transitions);
  TransitionDataset out(1, seed, "shifted(alpha=" + format_real(alpha) + ")");
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = draw_state(state_rng);
    const std::size_t a = policy.sample(s, transitions);
    const std::size_t next = mdp.sample_next(s, a, transitions);
    const double cur = static_cast<double>(s);
    const double nxt = static_cast<double>(next);
    out.push_back(std::span<const double>(&cur, 1), a, mdp.reward(s, a), std::span<const double>(&nxt, 1),
                  mdp.is_terminal(next));
  }
  return out;
}

std::pair<TransitionDataset, TransitionDataset> split(const TransitionDataset& dataset, double ratio,
                                                      std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split ratio must lie in (0, 1)");
  const std::size_t n = dataset.size();
  if (n < 2) throw InvalidArgument("cannot split a dataset with fewer than 2 rows");
  // The epsilon keeps exact products such as 0.9 * 100 from flooring to 89.
  auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, Stream::split);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> train_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> valid_rows(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(valid_rows.begin(), valid_rows.end());

  auto train = dataset.subset(train_rows);
  auto valid = dataset.subset(valid_rows);
  train.set_split_tag(SplitTag::train);
  valid.set_split_tag(SplitTag::valid);
  return {std::move(train), std::move(valid)};
}

std::string format_real(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_real(std::string_view field, std::size_t line, const char* what) {
  double value = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(value))
    throw ParseError(line, std::string("invalid ") + what + " field '" + std::string(field) + "'");
  return value;
}

std::size_t parse_count(std::string_view field, std::size_t line, const char* what) {
  std::size_t value = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw ParseError(line, std::string("invalid ") + what + " field '" + std::string(field) + "'");
  return value;
}

}  // namespace

void write_csv(const TransitionDataset& dataset, std::ostream& out) {
  const std::size_t d = dataset.state_dim();
  out << "# source=" << dataset.source() << ";seed=" << dataset.seed() << "\n";
  for (std::size_t k = 0; k < d; ++k) out << "s_" << k << ',';
  out << "a,r,";
  for (std::size_t k = 0; k < d; ++k) out << "sp_" << k << ',';
  out << "terminal\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (double v : dataset.state(i)) out << format_real(v) << ',';
    out << dataset.action(i) << ',' << format_real(dataset.reward(i)) << ',';
    for (double v : dataset.next_state(i)) out << format_real(v) << ',';
    out << (dataset.terminal(i) ? 1 : 0) << '\n';
  }
}

TransitionDataset read_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::uint64_t seed = 0;
  std::string source;
  std::size_t d = 0;
  bool have_header = false;
  TransitionDataset out;
  std::vector<double> state;
  std::vector<double> next;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto src = line.find("source=");
      const auto sd = line.find(";seed=");
      if (!have_header && src != std::string::npos && sd != std::string::npos) {
        source = line.substr(src + 7, sd - (src + 7));
        seed = parse_count(std::string_view(line).substr(sd + 6), line_no, "seed");
      }
      continue;
    }
    const auto fields = split_fields(line);
    if (!have_header) {
      if (fields.size() < 5 || (fields.size() - 3) % 2 != 0) throw ParseError(line_no, "malformed header");
      d = (fields.size() - 3) / 2;
      for (std::size_t k = 0; k < d; ++k) {
        if (fields[k] != "s_" + std::to_string(k) || fields[d + 2 + k] != "sp_" + std::to_string(k))
          throw ParseError(line_no, "malformed header");
      }
      if (fields[d] != "a" || fields[d + 1] != "r" || fields.back() != "terminal")
        throw ParseError(line_no, "malformed header");
      out = TransitionDataset(d, seed, source);
      state.resize(d);
      next.resize(d);
      have_header = true;
      continue;
    }
    if (fields.size() != 2 * d + 3)
      throw ParseError(line_no, "expected " + std::to_string(2 * d + 3) + " fields, got " +
                                    std::to_string(fields.size()));
    for (std::size_t k = 0; k < d; ++k) {
      state[k] = parse_real(fields[k], line_no, "state");
      next[k] = parse_real(fields[d + 2 + k], line_no, "next_state");
    }
    const std::size_t action = parse_count(fields[d], line_no, "action");
    const double reward = parse_real(fields[d + 1], line_no, "reward");
    const auto term = fields.back();
    if (term != "0" && term != "1") throw ParseError(line_no, "invalid terminal field '" + std::string(term) + "'");
    out.push_back(state, action, reward, next, term == "1");
  }
  if (!have_header) throw ParseError(line_no, "missing header row");
  return out;
}

void save(const TransitionDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_csv(dataset, out);
}

TransitionDataset load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_csv(in);
}

}  // namespace ivope::data
