#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "homtest/errors.hpp"

namespace homtest {

// Balanced random partition into K folds, reproducible from the seed.
struct FoldPlan {
    std::vector<int> assignments;  // fold index per observation, 1-based
    int num_folds = 0;
    uint64_t seed = 0;

    std::vector<Eigen::Index> in_fold(int k) const {
        std::vector<Eigen::Index> idx;
        for (size_t i = 0; i < assignments.size(); ++i)
            if (assignments[i] == k) idx.push_back(static_cast<Eigen::Index>(i));
        return idx;
    }
    std::vector<Eigen::Index> out_of_fold(int k) const {
        std::vector<Eigen::Index> idx;
        for (size_t i = 0; i < assignments.size(); ++i)
            if (assignments[i] != k) idx.push_back(static_cast<Eigen::Index>(i));
        return idx;
    }
};

inline FoldPlan make_folds(Eigen::Index n, int num_folds, uint64_t seed) {
    if (num_folds < 2) throw ValidationError("make_folds: need at least 2 folds");
    if (n < num_folds) throw ValidationError("make_folds: fewer observations than folds");
    FoldPlan plan;
    plan.num_folds = num_folds;
    plan.seed = seed;
    plan.assignments.resize(static_cast<size_t>(n));
    std::vector<size_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t i = 0; i < order.size(); ++i)
        plan.assignments[order[i]] = static_cast<int>(i % static_cast<size_t>(num_folds)) + 1;
    return plan;
}

}  // namespace homtest
