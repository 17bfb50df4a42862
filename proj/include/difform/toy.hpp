#pragma once

#include <array>
#include <vector>

namespace difform {

// 2D convex loss f(x,y) = x_th^2 + kappa*y_th^2 with (x_th, y_th) = R(theta)(x, y).
struct ToyProblem {
    double kappa = 1.0;
    double theta = 0.0;
};

struct ToyEval {
    double value = 0.0;
    std::array<double, 2> grad{0.0, 0.0};
};

ToyEval toy_eval(const ToyProblem& p, double x, double y);

enum class ToyOptimizer { sgd, adam };

struct ToyRun {
    std::vector<std::array<double, 2>> trajectory;  // includes start, length iters+1
    double final_distance = 0.0;                    // Euclidean distance to origin
    bool diverged = false;                          // non-finite iterate seen
};

// Defaults match the experiment setup: start (5,5), 1000 iterations.
// eta <= 0 picks the per-optimizer default (SGD 0.4, Adam 1.0).
ToyRun run_toy(const ToyProblem& p, ToyOptimizer opt, int iters = 1000,
               std::array<double, 2> start = {5.0, 5.0}, double eta = -1.0);

double default_toy_eta(ToyOptimizer opt);

}  // namespace difform
