#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace testutil {

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    const auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    path = base / ("curnm_test_" + std::to_string(rd()) + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

/// Regularized upper incomplete gamma Q(a, x); used for chi-square p-values.
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) return 1.0;
  if (x == 0.0) return 1.0;
  auto gammln = [](double z) { return std::lgamma(z); };
  if (x < a + 1.0) {
    // series for P(a,x), return 1 - P
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - gammln(a));
    return 1.0 - p;
  }
  // continued fraction for Q(a,x) (modified Lentz)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gammln(a)) * h;
}

inline double chi_square_p_value(double chi2, double dof) {
  return gamma_q(dof / 2.0, chi2 / 2.0);
}

/// Central finite difference of a scalar function w.r.t. params[i].
template <typename F>
double central_diff(F&& f, std::vector<double>& params, std::size_t i, double h = 1e-6) {
  const double orig = params[i];
  params[i] = orig + h;
  const double fp = f();
  params[i] = orig - h;
  const double fm = f();
  params[i] = orig;
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double got, double want) {
  const double denom = std::max({std::fabs(got), std::fabs(want), 1e-10});
  return std::fabs(got - want) / denom;
}

}  // namespace testutil
