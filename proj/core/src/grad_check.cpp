#include "boltzseg/grad_check.hpp"

#include <cmath>
#include <cstdio>

#include "boltzseg/errors.hpp"

namespace boltzseg {

GradCheckReport grad_check(const std::function<TensorPtr(Tape&)>& fragment,
                           const std::vector<TensorPtr>& wrt, double step) {
  GradCheckReport report;

  auto eval = [&fragment]() {
    Tape tape;
    TensorPtr out = fragment(tape);
    if (out->numel() != 1)
      throw InvalidArgument("grad_check: fragment must be scalar-valued");
    return out->v[0];
  };

  // Analytic pass.
  std::vector<std::vector<double>> analytic(wrt.size());
  {
    for (const auto& t : wrt) std::fill(t->g.begin(), t->g.end(), 0.0);
    Tape tape;
    TensorPtr out = fragment(tape);
    if (out->numel() != 1)
      throw InvalidArgument("grad_check: fragment must be scalar-valued");
    if (!std::isfinite(out->v[0])) {
      report.finite = false;
      report.worst = "non-finite forward value";
      return report;
    }
    tape.backward(out);
    for (size_t k = 0; k < wrt.size(); ++k) analytic[k] = wrt[k]->g;
  }

  for (size_t k = 0; k < wrt.size(); ++k) {
    Tensor& t = *wrt[k];
    for (int64_t i = 0; i < t.numel(); ++i) {
      double saved = t.v[i];
      t.v[i] = saved + step;
      double up = eval();
      t.v[i] = saved - step;
      double down = eval();
      t.v[i] = saved;
      double numeric = (up - down) / (2.0 * step);
      double a = analytic[k][i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        report.finite = false;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "tensor %zu[%lld] non-finite", k,
                      static_cast<long long>(i));
        report.worst = buf;
        return report;
      }
      double abs_err = std::fabs(a - numeric);
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      double rel = abs_err / denom;
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "tensor %zu[%lld]  analytic=%.8g  numeric=%.8g", k,
                      static_cast<long long>(i), a, numeric);
        report.worst = buf;
      }
    }
  }
  return report;
}

}  // namespace boltzseg
