#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "curnm/types.hpp"

namespace curnm {

struct CurriculumConfig {
  double gamma_shrink = 0.03;
  double tau = 0.5;
  double delta_min = 0.5;
  double alpha_max = 0.012;
  std::int64_t e_prime = 200;         // epoch at which alpha reaches alpha_max
  std::int64_t e_double_prime = 200;  // epoch at which beta reaches 1
  double pi_init = 1.0;
  double pi_min = 0.10;
  double improvement_tolerance = 0.0;

  // Ablation toggles. "off" semantics: pi frozen at pi_init; random-negative
  // weight forced to 0; cache indicator never latches.
  bool ablate_adaptive_pi = false;
  bool ablate_random_negatives = false;
  bool ablate_hard_cache = false;

  void validate() const;  // throws ValidationError listing every violation
};

/// The epoch-level scalar schedule bundle: sampling proportion pi, random-
/// negative weight delta, deviation weight alpha, factor-balance weight beta,
/// and the latched hard-cache indicator.
struct CurriculumState {
  std::int64_t epoch = 1;
  double pi = 1.0;
  double delta = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  bool cache_active = false;
  double best_metric = 0.0;
  CurriculumConfig config;
};

CurriculumState make_curriculum_state(const CurriculumConfig& cfg);

/// pi shrinks by gamma_shrink when performance improved, grows otherwise;
/// clamped to [pi_min, 1]. delta follows as max(pi, delta_min).
CurriculumState update_pi(CurriculumState s, bool improved);

/// True iff the latest metric strictly exceeds the best previous metric by
/// more than `tolerance`; vacuously true for a single-entry history.
bool judge_improvement(const std::vector<double>& history, double tolerance);

/// Recomputes alpha/beta/delta for the state's current epoch and latches the
/// cache indicator once pi <= tau. The epoch counter is advanced by the caller.
CurriculumState step_schedules(CurriculumState s);

/// n_b = round(pi * batch_size * M), floored at 1.
std::int64_t negatives_budget(double pi, std::int64_t batch_size, std::int64_t pool_size);

void write_schedule_header(std::ostream& out);
void append_schedule_row(std::ostream& out, const CurriculumState& s, double val_metric);

}  // namespace curnm
