#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "homtest/errors.hpp"

namespace homtest {

enum class Mode { cate, clate, did };

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::cate: return "cate";
        case Mode::clate: return "clate";
        case Mode::did: return "did";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "cate") return Mode::cate;
    if (s == "clate") return Mode::clate;
    if (s == "did") return Mode::did;
    throw ValidationError("unknown mode: " + s);
}

// One observation per row: outcome, binary treatment, site index in
// {1,...,L}, covariate row, plus an optional binary instrument and
// optional pre/post-period outcomes for panel data.
struct SiteDataset {
    Eigen::VectorXd y;
    Eigen::VectorXi d;
    Eigen::VectorXi z;  // 1-based site index
    Eigen::MatrixXd x;
    int num_sites = 0;
    std::optional<Eigen::VectorXi> w;
    std::optional<Eigen::VectorXd> y_pre;
    std::optional<Eigen::VectorXd> y_post;

    Eigen::Index n() const { return y.size(); }
};

inline void validate_dataset(const SiteDataset& data, Mode mode) {
    const Eigen::Index n = data.n();
    if (n < 2) throw ValidationError("dataset: need at least 2 observations");
    if (data.d.size() != n || data.z.size() != n || data.x.rows() != n)
        throw ValidationError("dataset: column lengths differ");
    if (data.x.cols() < 1) throw ValidationError("dataset: need at least 1 covariate");
    if (!data.x.allFinite() || !data.y.allFinite())
        throw ValidationError("dataset: non-finite values");
    if (data.num_sites < 2) throw ValidationError("dataset: need at least 2 sites");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (data.d[i] != 0 && data.d[i] != 1)
            throw ValidationError("dataset: treatment must be 0/1");
        if (data.z[i] < 1 || data.z[i] > data.num_sites)
            throw ValidationError("dataset: site index out of range");
    }
    if (mode == Mode::did) {
        if (!data.y_pre || !data.y_post)
            throw ValidationError("did mode requires pre- and post-period outcomes");
        if (data.y_pre->size() != n || data.y_post->size() != n)
            throw ValidationError("dataset: panel column lengths differ");
    }
    if (mode == Mode::clate) {
        if (!data.w) throw ValidationError("clate mode requires an instrument");
        if (data.w->size() != n) throw ValidationError("dataset: instrument length differs");
        for (Eigen::Index i = 0; i < n; ++i)
            if ((*data.w)[i] != 0 && (*data.w)[i] != 1)
                throw ValidationError("dataset: instrument must be 0/1");
    }
    // every site needs both arms (treatment arms in cate/did, instrument
    // arms in clate)
    const Eigen::VectorXi& arm = mode == Mode::clate ? *data.w : data.d;
    std::vector<std::array<int, 2>> counts(static_cast<size_t>(data.num_sites), {0, 0});
    for (Eigen::Index i = 0; i < n; ++i)
        ++counts[static_cast<size_t>(data.z[i] - 1)][static_cast<size_t>(arm[i])];
    for (int s = 0; s < data.num_sites; ++s) {
        if (counts[static_cast<size_t>(s)][0] == 0 || counts[static_cast<size_t>(s)][1] == 0)
            throw ValidationError("dataset: site " + std::to_string(s + 1) +
                                  " lacks one of the two arms");
    }
}

// Routes panel data through the level-outcome machinery by replacing the
// outcome with the post-minus-pre difference.
inline SiteDataset did_transform(const SiteDataset& data) {
    if (!data.y_pre || !data.y_post)
        throw ValidationError("did_transform: pre- and post-period outcomes required");
    if (data.y_pre->size() != data.y_post->size())
        throw ValidationError("did_transform: panel column lengths differ");
    SiteDataset out = data;
    out.y = *data.y_post - *data.y_pre;
    out.y_pre.reset();
    out.y_post.reset();
    return out;
}

}  // namespace homtest
