#include "curnm/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace curnm {

namespace {

double clamp01(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

double delta_for(const CurriculumState& s) {
  if (s.config.ablate_random_negatives) return 0.0;
  return std::max(s.pi, s.config.delta_min);
}

void fmt(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace

void CurriculumConfig::validate() const {
  std::string err;
  auto frac = [&](double v, const char* name) {
    if (!(v > 0.0 && v <= 1.0))
      err += std::string("  ") + name + " must be in (0,1], got " + std::to_string(v) + "\n";
  };
  frac(gamma_shrink, "gamma_shrink");
  frac(tau, "tau");
  frac(delta_min, "delta_min");
  frac(pi_init, "pi_init");
  frac(pi_min, "pi_min");
  if (pi_min > pi_init) err += "  pi_min exceeds pi_init\n";
  if (alpha_max < 0.0) err += "  alpha_max must be >= 0\n";
  if (e_prime < 1) err += "  e_prime must be >= 1\n";
  if (e_double_prime < 1) err += "  e_double_prime must be >= 1\n";
  if (improvement_tolerance < 0.0) err += "  improvement_tolerance must be >= 0\n";
  if (!err.empty()) throw ValidationError("invalid curriculum config:\n" + err);
}

CurriculumState make_curriculum_state(const CurriculumConfig& cfg) {
  cfg.validate();
  CurriculumState s;
  s.config = cfg;
  s.epoch = 1;
  s.pi = cfg.pi_init;
  s.delta = delta_for(s);
  return step_schedules(s);
}

CurriculumState update_pi(CurriculumState s, bool improved) {
  if (!s.config.ablate_adaptive_pi) {
    s.pi += improved ? -s.config.gamma_shrink : s.config.gamma_shrink;
    s.pi = clamp01(s.pi, s.config.pi_min, 1.0);
  }
  s.delta = delta_for(s);
  return s;
}

bool judge_improvement(const std::vector<double>& history, double tolerance) {
  if (history.empty())
    throw ValidationError("judge_improvement requires a non-empty history");
  if (history.size() == 1) return true;
  const double latest = history.back();
  double best = history.front();
  for (std::size_t i = 1; i + 1 < history.size(); ++i) best = std::max(best, history[i]);
  return latest > best + tolerance;
}

CurriculumState step_schedules(CurriculumState s) {
  const auto& c = s.config;
  const double e = static_cast<double>(s.epoch);
  s.alpha = c.alpha_max * std::min(e / static_cast<double>(c.e_prime), 1.0);
  s.beta = std::min(e / static_cast<double>(c.e_double_prime), 1.0);
  s.delta = delta_for(s);
  if (!c.ablate_hard_cache && s.pi <= c.tau) s.cache_active = true;  // latched
  return s;
}

std::int64_t negatives_budget(double pi, std::int64_t batch_size, std::int64_t pool_size) {
  if (batch_size < 1 || pool_size < 1)
    throw ValidationError("negatives_budget requires batch_size >= 1 and pool_size >= 1");
  const double raw = pi * static_cast<double>(batch_size) * static_cast<double>(pool_size);
  return std::max<std::int64_t>(1, std::llround(raw));
}

void write_schedule_header(std::ostream& out) {
  out << "epoch,pi,delta,alpha,beta,cache_active,val_metric\n";
}

void append_schedule_row(std::ostream& out, const CurriculumState& s, double val_metric) {
  out << s.epoch << ',';
  fmt(out, s.pi);
  out << ',';
  fmt(out, s.delta);
  out << ',';
  fmt(out, s.alpha);
  out << ',';
  fmt(out, s.beta);
  out << ',' << (s.cache_active ? 1 : 0) << ',';
  fmt(out, val_metric);
  out << '\n';
}

}  // namespace curnm
