#include "xmlc/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace xmlc {
namespace {

double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Perturbs *value[c], evaluates, restores. Shared by both entry points.
struct Probe {
  std::function<double()> eval;

  void check(double analytic, double& slot, const std::string& where,
             const GradCheckOptions& opts, GradCheckReport& rep) {
    const double orig = slot;
    slot = orig + opts.step;
    const double fp = eval();
    slot = orig - opts.step;
    const double fm = eval();
    slot = orig;
    const double numeric = (fp - fm) / (2.0 * opts.step);
    double err = rel_error(analytic, numeric, opts.floor);
    if (err > opts.tolerance && opts.kink_tolerant) {
      const double f0 = eval();
      const double one_sided = std::min(rel_error(analytic, (fp - f0) / opts.step, opts.floor),
                                        rel_error(analytic, (f0 - fm) / opts.step, opts.floor));
      if (one_sided <= opts.tolerance) {
        ++rep.one_sided;
        err = one_sided;
      }
    }
    ++rep.coordinates;
    if (err > rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst = where + " (analytic " + std::to_string(analytic) + ", numeric " + std::to_string(numeric) + ")";
    }
  }
};

}  // namespace

GradCheckReport grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& opts) {
  std::vector<Tensor> work = inputs;
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : work) vars.push_back(tape.input(t));
    Var out = fn(tape, vars);
    tape.backward(out);
    for (const Var& v : vars) {
      const Tensor* g = tape.grad(v);
      analytic.push_back(g ? *g : Tensor(v.shape()));
    }
  }
  Probe probe{[&] {
    Tape tape(false);
    std::vector<Var> vars;
    for (const Tensor& t : work) vars.push_back(tape.constant(t));
    return fn(tape, vars).value().item();
  }};
  GradCheckReport rep;
  for (std::size_t k = 0; k < work.size(); ++k) {
    for (std::size_t c = 0; c < work[k].size(); ++c) {
      probe.check(analytic[k][c], work[k][c],
                  "input[" + std::to_string(k) + "] coord " + std::to_string(c), opts, rep);
    }
  }
  rep.passed = rep.max_rel_error <= opts.tolerance;
  return rep;
}

GradCheckReport grad_check_params(const std::function<Var(Tape&)>& loss,
                                  const std::vector<Parameter*>& params,
                                  const GradCheckOptions& opts) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = loss(tape);
    tape.backward(out);
    tape.accumulate_param_grads();
  }
  Probe probe{[&] {
    Tape tape(false);
    return loss(tape).value().item();
  }};
  GradCheckReport rep;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    const Tensor analytic = p->grad;
    for (std::size_t c = 0; c < p->value.size(); ++c) {
      probe.check(analytic[c], p->value[c], p->name + " coord " + std::to_string(c), opts, rep);
    }
  }
  rep.passed = rep.max_rel_error <= opts.tolerance;
  return rep;
}

}  // namespace xmlc
