#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "msfm/tape.hpp"

namespace msfm {

/// Norms and cosine of a gradient pair, plus unit directions where defined.
struct GradPairStats {
    double norm_fm = 0.0;  // ||g1||
    double norm_mc = 0.0;  // ||g2||
    double cosine = 0.0;   // cos(g1, g2), 0 when either norm vanishes
};

GradPairStats grad_pair_stats(const GradVector& g1, const GradVector& g2);

/// Closed-form mixing weights (a1, a2 = 1 - a1) such that the composite
/// g = a1 g1 + a2 g2 satisfies c * (g . u1) = g . u2. Returns nullopt when
/// the denominator vanishes.
std::optional<std::pair<double, double>> closed_form_weights(double norm_fm, double norm_mc,
                                                             double cosine, double c);

/// Admissible region for the projection ratio c given gradient norms A, B and
/// cosine delta:
///   delta < c < (A delta - B)/(A - B delta)      if delta > 0 and A < B delta
///   c > max(delta, A/B)                          if delta > 0 and A = B delta
///   c > max(delta, (A delta - B)/(A - B delta))  if delta > 0 and A > B delta
///   c > 0                                        if delta <= 0
/// On the operating domain c in (0,1] this is equivalent to a1 in (0,1).
bool scale_factor_valid(double norm_fm, double norm_mc, double cosine, double c);

/// Gradient surgery: when g1 . g2 < 0, each gradient loses its component along
/// the *original* other gradient. Non-conflicting pairs pass through unchanged;
/// a zero-norm gradient leaves the other untouched.
std::pair<GradVector, GradVector> pcgrad_project(const GradVector& g1, const GradVector& g2);

enum class CombineBranch : std::uint8_t {
    WarmStart,   // PCGrad surgery with equal weights
    ClosedForm,  // projection-balanced weights
    Fallback,    // c outside the admissible region: equal weights on raw grads
    ZeroGrad,    // one gradient vanished: pass the other through
};

std::string to_string(CombineBranch branch);

struct CombineResult {
    GradVector direction;
    double alpha1 = 0.5;
    double c = 0.0;
    double cosine = 0.0;
    double norm_fm = 0.0;
    double norm_mc = 0.0;
    CombineBranch branch = CombineBranch::Fallback;
};

struct AgaConfig {
    double c0 = 1.0;             // initial projection ratio
    double ema = 0.9;            // smoothing of c updates
    double sensitivity = 0.1;    // gain on the descent-rate ratio
    long warm_start_steps = 0;   // PCGrad steps before adaptive allocation
    long update_period = 1;      // combine() calls per c update (per-epoch means)
};

/// Adaptive allocation state: the projection ratio c, its EMA machinery, the
/// previous-loss registers for the descent rates, and the warm-start counter.
/// Mutated by exactly one training loop.
class GradientAllocator {
public:
    explicit GradientAllocator(AgaConfig config);

    double scale_factor() const { return c_; }
    long steps_taken() const { return step_; }
    const AgaConfig& config() const { return cfg_; }

    /// Descent-rate update of c. The first call only initializes the loss
    /// registers and returns c unchanged. Loss ratios are clamped to [0.1, 10]
    /// and c to (0, 1] afterwards.
    double update_scale_factor(double loss_fm, double loss_mc);

    /// One allocation step per Algorithm "adaptive gradient allocation":
    /// warm-start -> PCGrad with equal weights; afterwards c adapts on
    /// accumulated per-period mean losses, and the closed form applies when c
    /// is admissible, with the equal-weight fallback otherwise.
    CombineResult combine(const GradVector& g1, const GradVector& g2, double loss_fm,
                          double loss_mc);

    // checkpoint plumbing
    void restore(double c, double prev_fm, double prev_mc, bool registers_set, long step);
    double prev_loss_fm() const { return prev_fm_; }
    double prev_loss_mc() const { return prev_mc_; }
    bool registers_set() const { return registers_set_; }

private:
    AgaConfig cfg_;
    double c_;
    double prev_fm_ = 0.0;
    double prev_mc_ = 0.0;
    bool registers_set_ = false;
    long step_ = 0;
    double accum_fm_ = 0.0;
    double accum_mc_ = 0.0;
    long accum_count_ = 0;
};

}  // namespace msfm
