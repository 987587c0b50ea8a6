#include "msfm/aga.hpp"

#include <algorithm>
#include <cmath>

#include "msfm/errors.hpp"

namespace msfm {

GradPairStats grad_pair_stats(const GradVector& g1, const GradVector& g2) {
    if (g1.size() != g2.size()) throw ShapeError("gradient pair: length mismatch");
    GradPairStats s;
    s.norm_fm = l2_norm(g1);
    s.norm_mc = l2_norm(g2);
    if (s.norm_fm > 0.0 && s.norm_mc > 0.0) {
        s.cosine = std::clamp(dot(g1, g2) / (s.norm_fm * s.norm_mc), -1.0, 1.0);
    }
    return s;
}

std::optional<std::pair<double, double>> closed_form_weights(double norm_fm, double norm_mc,
                                                             double cosine, double c) {
    const double numer = norm_mc * (1.0 - c * cosine);
    const double denom = norm_fm * (c - cosine) + numer;
    if (denom == 0.0 || !std::isfinite(denom)) return std::nullopt;
    const double alpha1 = numer / denom;
    return std::make_pair(alpha1, 1.0 - alpha1);
}

bool scale_factor_valid(double norm_fm, double norm_mc, double cosine, double c) {
    if (c <= 0.0) return false;
    if (cosine <= 0.0) return true;

    const double a = norm_fm, b = norm_mc;
    if (a < b * cosine) {
        const double upper = (a * cosine - b) / (a - b * cosine);
        return cosine < c && c < upper;
    }
    if (a == b * cosine) {
        return c > std::max(cosine, a / b);
    }
    const double lower = (a * cosine - b) / (a - b * cosine);
    return c > std::max(cosine, lower);
}

std::pair<GradVector, GradVector> pcgrad_project(const GradVector& g1, const GradVector& g2) {
    if (g1.size() != g2.size()) throw ShapeError("pcgrad: length mismatch");
    GradVector out1 = g1;
    GradVector out2 = g2;
    const double inner = dot(g1, g2);
    if (inner < 0.0) {
        // projections against the original other gradient
        const double n2sq = dot(g2, g2);
        if (n2sq > 0.0) axpy(-inner / n2sq, g2.span(), out1.span());
        const double n1sq = dot(g1, g1);
        if (n1sq > 0.0) axpy(-inner / n1sq, g1.span(), out2.span());
    }
    return {std::move(out1), std::move(out2)};
}

std::string to_string(CombineBranch branch) {
    switch (branch) {
        case CombineBranch::WarmStart: return "warmstart";
        case CombineBranch::ClosedForm: return "closed-form";
        case CombineBranch::Fallback: return "fallback";
        case CombineBranch::ZeroGrad: return "zero-grad";
    }
    return "?";
}

GradientAllocator::GradientAllocator(AgaConfig config) : cfg_(config), c_(config.c0) {
    if (!(cfg_.c0 > 0.0)) throw ConfigError("aga: c0 must be positive");
    if (!(cfg_.ema >= 0.0 && cfg_.ema < 1.0)) throw ConfigError("aga: ema must be in [0,1)");
    if (!(cfg_.sensitivity > 0.0)) throw ConfigError("aga: sensitivity must be positive");
    if (cfg_.warm_start_steps < 0) throw ConfigError("aga: warm_start_steps must be >= 0");
    if (cfg_.update_period < 1) throw ConfigError("aga: update_period must be >= 1");
}

double GradientAllocator::update_scale_factor(double loss_fm, double loss_mc) {
    constexpr double kLossFloor = 1e-12;
    const double fm = std::max(loss_fm, kLossFloor);
    const double mc = std::max(loss_mc, kLossFloor);
    if (!registers_set_) {
        prev_fm_ = fm;
        prev_mc_ = mc;
        registers_set_ = true;
        return c_;
    }
    const double rate_fm = fm / prev_fm_;
    const double rate_mc = mc / prev_mc_;
    double ratio = rate_mc / rate_fm;
    if (!std::isfinite(ratio)) ratio = 10.0;
    ratio = std::clamp(ratio, 0.1, 10.0);

    const double c_new = c_ * std::exp(cfg_.sensitivity * (ratio - 1.0));
    if (c_new != c_) c_ = cfg_.ema * c_ + (1.0 - cfg_.ema) * c_new;
    c_ = std::clamp(c_, 1e-12, 1.0);

    prev_fm_ = fm;
    prev_mc_ = mc;
    return c_;
}

CombineResult GradientAllocator::combine(const GradVector& g1, const GradVector& g2,
                                         double loss_fm, double loss_mc) {
    if (!g1.all_finite() || !g2.all_finite() || !std::isfinite(loss_fm) ||
        !std::isfinite(loss_mc)) {
        throw NumericError("gradient allocation: non-finite input");
    }

    const long k = step_++;
    GradPairStats stats = grad_pair_stats(g1, g2);

    CombineResult res;
    res.c = c_;
    res.cosine = stats.cosine;
    res.norm_fm = stats.norm_fm;
    res.norm_mc = stats.norm_mc;

    if (stats.norm_fm == 0.0 || stats.norm_mc == 0.0) {
        res.branch = CombineBranch::ZeroGrad;
        res.direction = stats.norm_fm == 0.0 ? g2 : g1;
        res.alpha1 = stats.norm_fm == 0.0 ? 0.0 : 1.0;
        return res;
    }

    if (k < cfg_.warm_start_steps) {
        auto [p1, p2] = pcgrad_project(g1, g2);
        GradVector dir(g1.size());
        for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = 0.5 * p1[i] + 0.5 * p2[i];
        res.branch = CombineBranch::WarmStart;
        res.alpha1 = 0.5;
        res.direction = std::move(dir);
        return res;
    }

    // c adapts on per-period mean losses; frozen during the warm start.
    accum_fm_ += loss_fm;
    accum_mc_ += loss_mc;
    if (++accum_count_ >= cfg_.update_period) {
        const double inv = 1.0 / static_cast<double>(accum_count_);
        update_scale_factor(accum_fm_ * inv, accum_mc_ * inv);
        accum_fm_ = accum_mc_ = 0.0;
        accum_count_ = 0;
        res.c = c_;
    }

    if (scale_factor_valid(stats.norm_fm, stats.norm_mc, stats.cosine, c_)) {
        if (auto weights = closed_form_weights(stats.norm_fm, stats.norm_mc, stats.cosine, c_)) {
            const auto [a1, a2] = *weights;
            GradVector dir(g1.size());
            for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = a1 * g1[i] + a2 * g2[i];
            res.branch = CombineBranch::ClosedForm;
            res.alpha1 = a1;
            res.direction = std::move(dir);
            return res;
        }
    }

    GradVector dir(g1.size());
    for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = 0.5 * g1[i] + 0.5 * g2[i];
    res.branch = CombineBranch::Fallback;
    res.alpha1 = 0.5;
    res.direction = std::move(dir);
    return res;
}

void GradientAllocator::restore(double c, double prev_fm, double prev_mc, bool registers_set,
                                long step) {
    c_ = c;
    prev_fm_ = prev_fm;
    prev_mc_ = prev_mc;
    registers_set_ = registers_set;
    step_ = step;
    accum_fm_ = accum_mc_ = 0.0;
    accum_count_ = 0;
}

}  // namespace msfm
