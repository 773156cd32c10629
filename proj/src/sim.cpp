#include "weakgame/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "weakgame/parallel.hpp"
#include "weakgame/rng.hpp"

namespace weakgame {

TimeGrid make_time_grid(double horizon, std::size_t n_steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw InvalidArgument("make_time_grid: horizon T must be > 0");
  }
  if (n_steps < 1) throw InvalidArgument("make_time_grid: n_steps must be >= 1");
  TimeGrid grid;
  grid.horizon = horizon;
  grid.n_steps = n_steps;
  grid.nodes.resize(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k) {
    grid.nodes[k] = horizon * static_cast<double>(k) / static_cast<double>(n_steps);
  }
  return grid;
}

std::string to_string(GameKind kind) {
  switch (kind) {
    case GameKind::kZeroSum:
      return "zerosum";
    case GameKind::kNPlayer:
      return "nplayer";
    case GameKind::kMeanField:
      return "mfg";
  }
  return "unknown";
}

void GameSpec::validate() const {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("GameSpec: T must be > 0");
  if (!(dissipation >= 0.0) || !std::isfinite(dissipation)) {
    throw InvalidArgument("GameSpec: k must be >= 0");
  }
  if (!std::isfinite(x0)) throw InvalidArgument("GameSpec: x0 must be finite");
  if (n_players < 1) throw InvalidArgument("GameSpec: n_players must be >= 1");
  if (!(x0_variance >= 0.0)) throw InvalidArgument("GameSpec: x0_variance must be >= 0");
  if (kind == GameKind::kZeroSum && n_players != 2) {
    throw InvalidArgument("GameSpec: the zero-sum game has exactly 2 players");
  }
}

std::size_t GameSpec::state_dim() const {
  switch (kind) {
    case GameKind::kZeroSum:
    case GameKind::kMeanField:
      return 1;
    case GameKind::kNPlayer:
      return n_players;
  }
  return 1;
}

// ---------------------------------------------------------------------------
// PathBundle

PathBundle::PathBundle(TimeGrid grid, std::size_t n_paths, std::size_t dim, std::uint64_t seed,
                       double dissipation, SimOptions options, std::string measure_tag)
    : grid_(std::move(grid)),
      n_paths_(n_paths),
      dim_(dim),
      seed_(seed),
      dissipation_(dissipation),
      options_(options),
      measure_tag_(std::move(measure_tag)) {
  if (n_paths_ < 1) throw InvalidArgument("PathBundle: n_paths must be >= 1");
  if (dim_ < 1) throw InvalidArgument("PathBundle: dimension must be >= 1");
  if (n_paths_ > 0xFFFFFFFFu) throw InvalidArgument("PathBundle: too many paths");
  states_.assign(grid_.n_nodes(), Matrix(n_paths_, dim_));
}

namespace {

/// First normal of every cell; with `second`, also the second one.
Matrix draw_normals(const PathBundle& bundle, std::uint32_t step, StreamTag tag,
                    Matrix* second = nullptr) {
  const std::size_t n = bundle.n_paths();
  const std::size_t dim = bundle.dim();
  const bool antithetic = bundle.options().antithetic;
  const std::uint64_t seed = bundle.seed();
  Matrix out(n, dim);
  if (second) second->resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for_each_block(n, [&](const BlockRange& r) {
    for (std::size_t j = 0; j < dim; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      for (std::size_t p = r.begin; p < r.end; ++p) {
        const std::size_t stream = antithetic ? p / 2 : p;
        const double sign = (antithetic && (p % 2 == 1)) ? -1.0 : 1.0;
        const auto row = static_cast<Eigen::Index>(p);
        const auto path = static_cast<std::uint32_t>(stream);
        const auto player = static_cast<std::uint32_t>(j);
        if (second) {
          const auto z = normal_pair(seed, path, player, step, tag);
          out(row, col) = sign * z[0];
          (*second)(row, col) = sign * z[1];
        } else {
          out(row, col) = sign * normal_first(seed, path, player, step, tag);
        }
      }
    }
  });
  return out;
}

void check_step(const PathBundle& bundle, std::size_t step) {
  if (step >= bundle.grid().n_steps) throw InvalidArgument("PathBundle: step out of range");
}

void fill_initial(PathBundle& bundle, const GameSpec& spec) {
  Matrix& x = bundle.mutable_states(0);
  if (spec.x0_variance > 0.0) {
    x = draw_normals(bundle, 0, StreamTag::kInitialState);
    x = (x.array() * std::sqrt(spec.x0_variance) + spec.x0).matrix();
  } else {
    x.setConstant(spec.x0);
  }
}

}  // namespace

Matrix PathBundle::increments(std::size_t step) const {
  check_step(*this, step);
  if (!stored_increments_.empty()) return stored_increments_[step];
  Matrix z = draw_normals(*this, static_cast<std::uint32_t>(step), StreamTag::kIncrement);
  z *= std::sqrt(grid_.dt());
  return z;
}

Matrix PathBundle::auxiliary_normals(std::size_t step) const {
  check_step(*this, step);
  Matrix second;
  draw_normals(*this, static_cast<std::uint32_t>(step), StreamTag::kIncrement, &second);
  return second;
}

void PathBundle::materialize_increments() {
  if (!stored_increments_.empty()) return;
  std::vector<Matrix> inc;
  inc.reserve(grid_.n_steps);
  for (std::size_t k = 0; k < grid_.n_steps; ++k) inc.push_back(increments(k));
  stored_increments_ = std::move(inc);
}

bool PathBundle::same_noise(const PathBundle& other) const {
  return grid_ == other.grid_ && n_paths_ == other.n_paths_ && dim_ == other.dim_ &&
         seed_ == other.seed_ && options_.antithetic == other.options_.antithetic;
}

PathBundle simulate_reference(const GameSpec& spec, const TimeGrid& grid, std::size_t n_paths,
                              std::uint64_t seed, SimOptions options) {
  spec.validate();
  if (n_paths < 1) throw InvalidArgument("simulate_reference: n_paths must be >= 1");
  PathBundle bundle(grid, n_paths, spec.state_dim(), seed, spec.dissipation, options,
                    PathBundle::kReferenceTag);
  fill_initial(bundle, spec);
  const double dt = grid.dt();
  const double k = spec.dissipation;
  const double sqrt_dt = std::sqrt(dt);
  for (std::size_t step = 0; step < grid.n_steps; ++step) {
    const Matrix& x = bundle.states(step);
    Matrix& next = bundle.mutable_states(step + 1);
    if (k == 0.0) {
      next = x + bundle.increments(step);
      continue;
    }
    Matrix aux;
    const Matrix dw =
        sqrt_dt * draw_normals(bundle, static_cast<std::uint32_t>(step), StreamTag::kIncrement, &aux);
    // (dW, int e^{-k(t_{n+1}-s)} dW_s) is jointly Gaussian; sample the integral
    // conditionally on dW.
    const double decay = std::exp(-k * dt);
    const double cov = -std::expm1(-k * dt) / k;
    const double var = -std::expm1(-2.0 * k * dt) / (2.0 * k);
    const double resid = std::sqrt(std::max(0.0, var - cov * cov / dt));
    next = decay * x + (cov / dt) * dw + resid * aux;
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Controls

ControlPath ControlPath::feedback(FeedbackFn fn, std::size_t n_controls, ControlCoupling coupling,
                                  double alpha_max, std::string label) {
  if (!fn) throw InvalidArgument("ControlPath::feedback: empty function");
  if (n_controls < 1) throw InvalidArgument("ControlPath::feedback: no controls");
  if (!(alpha_max > 0.0)) throw InvalidArgument("ControlPath::feedback: alpha_max must be > 0");
  ControlPath c;
  c.provenance_ = Provenance::kFeedback;
  c.fn_ = std::move(fn);
  c.n_controls_ = n_controls;
  c.coupling_ = coupling;
  c.alpha_max_ = alpha_max;
  c.label_ = std::move(label);
  return c;
}

ControlPath ControlPath::tabulated(std::vector<Matrix> table, ControlCoupling coupling,
                                   std::string label) {
  if (table.empty()) throw InvalidArgument("ControlPath::tabulated: empty table");
  ControlPath c;
  c.provenance_ = Provenance::kTabulated;
  c.n_controls_ = static_cast<std::size_t>(table.front().cols());
  for (const auto& m : table) {
    if (static_cast<std::size_t>(m.cols()) != c.n_controls_ || m.rows() != table.front().rows()) {
      throw InvalidArgument("ControlPath::tabulated: ragged table");
    }
    if (!m.allFinite()) throw InvalidArgument("ControlPath::tabulated: non-finite entry");
  }
  c.table_ = std::move(table);
  c.coupling_ = coupling;
  c.label_ = std::move(label);
  return c;
}

ControlPath ControlPath::zero(std::size_t n_controls, ControlCoupling coupling) {
  return feedback(
      [n_controls](std::size_t, double, const Matrix& x) {
        return Matrix::Zero(x.rows(), static_cast<Eigen::Index>(n_controls));
      },
      n_controls, coupling, 50.0, "zero");
}

ControlSample ControlPath::evaluate(const PathBundle& bundle, std::size_t node) const {
  if (node >= bundle.grid().n_steps) throw InvalidArgument("ControlPath: node out of range");
  ControlSample out;
  if (provenance_ == Provenance::kTabulated) {
    if (table_.size() != bundle.grid().n_steps ||
        static_cast<std::size_t>(table_[node].rows()) != bundle.n_paths()) {
      throw InvalidArgument("ControlPath: table does not match the bundle grid");
    }
    out.values = table_[node];
    return out;
  }
  out.values = fn_(node, bundle.grid().t(node), bundle.states(node));
  if (static_cast<std::size_t>(out.values.rows()) != bundle.n_paths() ||
      static_cast<std::size_t>(out.values.cols()) != n_controls_) {
    throw InvalidArgument("ControlPath: feedback returned the wrong shape");
  }
  if (!out.values.allFinite()) {
    throw NumericalFailure("sim", "non-finite feedback control", node);
  }
  for (Eigen::Index c = 0; c < out.values.cols(); ++c) {
    for (Eigen::Index p = 0; p < out.values.rows(); ++p) {
      double& a = out.values(p, c);
      if (std::abs(a) > alpha_max_) {
        a = std::copysign(alpha_max_, a);
        ++out.clipped;
      }
    }
  }
  return out;
}

Matrix ControlPath::drift(const Matrix& controls) const {
  if (coupling_ == ControlCoupling::kSummed) return controls.rowwise().sum();
  return controls;
}

ControlPath ControlPath::tabulate(const PathBundle& bundle) const {
  std::vector<Matrix> table;
  table.reserve(bundle.grid().n_steps);
  for (std::size_t k = 0; k < bundle.grid().n_steps; ++k) {
    table.push_back(evaluate(bundle, k).values);
  }
  return tabulated(std::move(table), coupling_, label_);
}

PathBundle simulate_controlled(const GameSpec& spec, const TimeGrid& grid,
                               const ControlPath& controls, std::size_t n_paths,
                               std::uint64_t seed, SimOptions options,
                               std::size_t* clip_count) {
  spec.validate();
  if (n_paths < 1) throw InvalidArgument("simulate_controlled: n_paths must be >= 1");
  if (controls.drift_dim() != spec.state_dim()) {
    throw InvalidArgument("simulate_controlled: control dimension does not match the state");
  }
  PathBundle bundle(grid, n_paths, spec.state_dim(), seed, spec.dissipation, options,
                    "controlled:" + controls.label());
  fill_initial(bundle, spec);
  const double dt = grid.dt();
  const double k = spec.dissipation;
  std::size_t clipped = 0;
  for (std::size_t step = 0; step < grid.n_steps; ++step) {
    const Matrix dw = bundle.increments(step);
    const ControlSample a = controls.evaluate(bundle, step);
    clipped += a.clipped;
    const Matrix& x = bundle.states(step);
    bundle.mutable_states(step + 1) = x + (controls.drift(a.values) - k * x) * dt + dw;
  }
  if (clip_count) *clip_count = clipped;
  return bundle;
}

namespace {

void check_reweighting(const PathBundle& bundle, const ControlPath& controls) {
  if (!bundle.is_reference()) {
    throw InvalidArgument("girsanov_weight: bundle must be simulated under the reference measure");
  }
  if (controls.drift_dim() != bundle.dim()) {
    throw InvalidArgument("girsanov_weight: control dimension does not match the bundle");
  }
}

}  // namespace

Vector girsanov_weight(const PathBundle& bundle, const ControlPath& controls) {
  check_reweighting(bundle, controls);
  const double dt = bundle.grid().dt();
  Vector log_w = Vector::Zero(static_cast<Eigen::Index>(bundle.n_paths()));
  for (std::size_t step = 0; step < bundle.grid().n_steps; ++step) {
    const Matrix drift = controls.drift(controls.evaluate(bundle, step).values);
    const Matrix dw = bundle.increments(step);
    log_w += (drift.cwiseProduct(dw) - 0.5 * dt * drift.cwiseAbs2()).rowwise().sum();
  }
  return log_w.array().exp().matrix();
}

Vector weighted_cost_samples(const PathBundle& bundle, const ControlPath& controls,
                             const CostDefinition& cost) {
  check_reweighting(bundle, controls);
  if (!cost.running || !cost.terminal) throw InvalidArgument("CostDefinition: missing part");
  const double dt = bundle.grid().dt();
  const auto n = static_cast<Eigen::Index>(bundle.n_paths());
  Vector log_w = Vector::Zero(n);
  Vector total = Vector::Zero(n);
  for (std::size_t step = 0; step < bundle.grid().n_steps; ++step) {
    const Matrix a = controls.evaluate(bundle, step).values;
    const Matrix drift = controls.drift(a);
    const Matrix dw = bundle.increments(step);
    log_w += (drift.cwiseProduct(dw) - 0.5 * dt * drift.cwiseAbs2()).rowwise().sum();
    total += dt * cost.running(step, bundle.grid().t(step), bundle.states(step), a);
  }
  total += cost.terminal(bundle.states(bundle.grid().n_steps));
  return log_w.array().exp().matrix().cwiseProduct(total);
}

Estimate reweighted_cost(const PathBundle& bundle, const ControlPath& controls,
                         const CostDefinition& cost) {
  const Vector s = weighted_cost_samples(bundle, controls, cost);
  return estimate_from_samples({s.data(), static_cast<std::size_t>(s.size())});
}

// ---------------------------------------------------------------------------
// Binary layout

namespace {

constexpr char kMagic[4] = {'W', 'G', 'P', 'B'};
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    value = std::bit_cast<T>(bytes);
  }
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw InvalidArgument("read_bundle: truncated input");
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    value = std::bit_cast<T>(bytes);
  }
  return value;
}

void put_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index p = 0; p < m.rows(); ++p) put<double>(out, m(p, j));
  }
}

void get_matrix(std::istream& in, Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index p = 0; p < m.rows(); ++p) m(p, j) = get<double>(in);
  }
}

}  // namespace

void write_bundle(std::ostream& out, const PathBundle& bundle) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, bundle.n_paths());
  put<std::uint64_t>(out, bundle.dim());
  put<std::uint64_t>(out, bundle.grid().n_steps);
  put<double>(out, bundle.grid().horizon);
  put<double>(out, bundle.dissipation());
  put<std::uint64_t>(out, bundle.seed());
  put<std::uint32_t>(out, bundle.options().antithetic ? 1u : 0u);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.measure_tag().size()));
  out.write(bundle.measure_tag().data(), static_cast<std::streamsize>(bundle.measure_tag().size()));
  for (std::size_t k = 0; k < bundle.grid().n_steps; ++k) put_matrix(out, bundle.increments(k));
  for (std::size_t k = 0; k < bundle.grid().n_nodes(); ++k) put_matrix(out, bundle.states(k));
}

PathBundle read_bundle(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw InvalidArgument("read_bundle: bad magic");
  if (get<std::uint32_t>(in) != kFormatVersion) {
    throw InvalidArgument("read_bundle: unsupported version");
  }
  const auto n_paths = get<std::uint64_t>(in);
  const auto dim = get<std::uint64_t>(in);
  const auto n_steps = get<std::uint64_t>(in);
  const auto horizon = get<double>(in);
  const auto dissipation = get<double>(in);
  const auto seed = get<std::uint64_t>(in);
  const auto flags = get<std::uint32_t>(in);
  const auto tag_len = get<std::uint32_t>(in);
  std::string tag(tag_len, '\0');
  in.read(tag.data(), tag_len);
  if (!in) throw InvalidArgument("read_bundle: truncated tag");
  PathBundle bundle(make_time_grid(horizon, n_steps), n_paths, dim, seed, dissipation,
                    SimOptions{(flags & 1u) != 0}, tag);
  bundle.stored_increments_.assign(n_steps, Matrix(n_paths, dim));
  for (auto& m : bundle.stored_increments_) get_matrix(in, m);
  for (auto& m : bundle.states_) get_matrix(in, m);
  return bundle;
}

}  // namespace weakgame
