#include "histream/schedule.hpp"

#include <array>
#include <cstdio>
#include <sstream>

#include "histream/error.hpp"

namespace histream {

namespace {

constexpr std::array<Mode, 6> kModes = {Mode::kHistream, Mode::kHistreamPlus,
                                        Mode::kBaselineFull, Mode::kNoDrc,
                                        Mode::kNoAgsw, Mode::kNaiveTwoStep};

constexpr std::array<double, 4> kFourStep = {1.0, 0.75, 0.5, 0.25};
constexpr std::array<double, 2> kTwoStep = {1.0, 0.5};

ChunkPlan split_plan(std::span<const double> raw, std::size_t n_low, double shift) {
  ChunkPlan plan;
  Phase low{Resolution::kLow, {}};
  Phase high{Resolution::kHigh, {}};
  for (std::size_t i = 0; i < raw.size(); ++i) {
    (i < n_low ? low : high).timesteps.push_back(shift_timestep(raw[i], shift));
  }
  if (!low.timesteps.empty()) plan.phases.push_back(std::move(low));
  plan.phases.push_back(std::move(high));
  return plan;
}

}  // namespace

ModeTraits traits(Mode mode) {
  switch (mode) {
    case Mode::kHistream:
    case Mode::kHistreamPlus:
    case Mode::kNaiveTwoStep:
      return {true, CachePolicy::kAgsw};
    case Mode::kBaselineFull:
      return {false, CachePolicy::kFullHistory};
    case Mode::kNoDrc:
      return {false, CachePolicy::kAgsw};
    case Mode::kNoAgsw:
      return {true, CachePolicy::kFullHistory};
  }
  throw ConfigError("unknown mode");
}

Mode parse_mode(std::string_view name) {
  for (Mode m : kModes) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + std::string(name) + "'");
}

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kHistream: return "histream";
    case Mode::kHistreamPlus: return "histream_plus";
    case Mode::kBaselineFull: return "baseline_full";
    case Mode::kNoDrc: return "no_drc";
    case Mode::kNoAgsw: return "no_agsw";
    case Mode::kNaiveTwoStep: return "naive_two_step";
  }
  return "?";
}

const char* to_string(CachePolicy policy) {
  return policy == CachePolicy::kAgsw ? "agsw" : "full_history";
}

std::span<const Mode> all_modes() { return kModes; }

double shift_timestep(double t, double s) {
  if (!(t >= 0.0 && t <= 1.0)) throw ContractError("shift_timestep: t must lie in [0, 1]");
  if (!(s > 0.0)) throw ContractError("shift_timestep: shift must be positive");
  return s * t / ((1.0 - t) + s * t);
}

std::size_t ChunkPlan::steps(Resolution r) const {
  std::size_t n = 0;
  for (const Phase& p : phases) {
    if (p.res == r) n += p.timesteps.size();
  }
  return n;
}

std::size_t ChunkPlan::total_steps() const {
  return steps(Resolution::kLow) + steps(Resolution::kHigh);
}

std::size_t DenoisePlan::forwards(Resolution r) const {
  std::size_t n = 0;
  for (const ChunkPlan& c : chunks) n += c.steps(r);
  return n;
}

std::size_t DenoisePlan::total_forwards() const {
  return forwards(Resolution::kLow) + forwards(Resolution::kHigh);
}

std::string DenoisePlan::to_table() const {
  std::ostringstream out;
  out << "chunk phase resolution timesteps\n";
  char buf[32];
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    for (std::size_t p = 0; p < chunks[i].phases.size(); ++p) {
      const Phase& ph = chunks[i].phases[p];
      out << i << ' ' << p << ' ' << to_string(ph.res);
      for (double t : ph.timesteps) {
        std::snprintf(buf, sizeof buf, " %.6f", t);
        out << buf;
      }
      out << '\n';
    }
  }
  return out.str();
}

DenoisePlan make_plan(Mode mode, int n_chunks, double shift) {
  if (n_chunks < 1) throw ConfigError("make_plan: n_chunks must be >= 1");
  DenoisePlan plan;
  plan.mode = mode;
  plan.shift = shift;
  for (int i = 0; i < n_chunks; ++i) {
    switch (mode) {
      case Mode::kHistream:
      case Mode::kNoAgsw:
        plan.chunks.push_back(split_plan(kFourStep, 2, shift));
        break;
      case Mode::kHistreamPlus:
        plan.chunks.push_back(i == 0 ? split_plan(kFourStep, 2, shift)
                                     : split_plan(kTwoStep, 1, shift));
        break;
      case Mode::kBaselineFull:
      case Mode::kNoDrc:
        plan.chunks.push_back(split_plan(kFourStep, 0, shift));
        break;
      case Mode::kNaiveTwoStep:
        plan.chunks.push_back(split_plan(kTwoStep, 1, shift));
        break;
    }
  }
  return plan;
}

template <class T>
BasicTensor<T> renoise_psi(const BasicTensor<T>& x0, const BasicTensor<T>& eps, T t) {
  if (x0.dims() != eps.dims()) {
    throw ShapeError("renoise_psi: " + dims_to_string(x0.dims()) + " vs " +
                     dims_to_string(eps.dims()));
  }
  if (!(t >= T(0) && t <= T(1))) throw ContractError("renoise_psi: t must lie in [0, 1]");
  BasicTensor<T> out(x0.dims());
  const T keep = T(1) - t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * x0[i] + t * eps[i];
  return out;
}

template BasicTensor<float> renoise_psi<float>(const BasicTensor<float>&,
                                               const BasicTensor<float>&, float);
template BasicTensor<double> renoise_psi<double>(const BasicTensor<double>&,
                                                 const BasicTensor<double>&, double);

}  // namespace histream
