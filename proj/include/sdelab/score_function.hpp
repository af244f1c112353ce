#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include "sdelab/rng.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

// Callable score field s(x, t) with metadata. Most scores are deterministic
// and set only `eval`. Conditional scores that sample an internal quantity
// per evaluation set `eval_rng` instead; samplers always call through the
// rng overload so those draws come from the caller's (per-chain) stream.
struct ScoreFunction {
    int dim = 0;
    std::string source;
    std::function<Vec(const Vec&, double)> eval;
    std::function<Vec(const Vec&, double, RngStream&)> eval_rng;

    bool stochastic() const { return static_cast<bool>(eval_rng); }

    Vec operator()(const Vec& x, double t) const {
        if (!eval) throw std::logic_error("ScoreFunction: stochastic score needs an rng stream");
        return eval(x, t);
    }

    Vec operator()(const Vec& x, double t, RngStream& rng) const {
        if (eval_rng) return eval_rng(x, t, rng);
        if (!eval) throw std::logic_error("ScoreFunction: no evaluator set");
        return eval(x, t);
    }
};

}  // namespace sdelab
