#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "homtest/dataset.hpp"
#include "homtest/errors.hpp"

namespace homtest {

// A column reference: a header name, or "#k" for 1-based position.
struct ColumnRef {
    std::string spec;

    bool bound() const { return !spec.empty(); }
};

struct InputSchema {
    ColumnRef outcome, treatment, site;
    std::vector<ColumnRef> covariates;  // explicit list, or the single ref "rest"
    ColumnRef instrument;               // optional
    ColumnRef outcome_pre, outcome_post;  // optional, for panel data
};

struct IngestOptions {
    InputSchema schema;
    Mode mode = Mode::cate;
    Eigen::Index min_site_size = 0;
};

struct IngestReport {
    Eigen::Index rows_total = 0;          // data rows in the file
    Eigen::Index rows_after_missing = 0;  // after listwise deletion
    Eigen::Index rows_after_site_size = 0;
    Eigen::Index rows_final = 0;          // after dropping one-armed sites
    std::vector<std::string> dropped_small_sites;
    std::vector<std::string> dropped_one_armed_sites;
    std::vector<std::pair<std::string, int>> site_map;  // label -> dense index
    std::vector<std::string> covariate_names;
};

namespace detail {

inline std::vector<std::string> split_delimited(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == delim && !quoted) {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

inline bool is_missing(const std::string& s) {
    return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == ".";
}

inline double parse_number(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ValidationError("ingest: non-numeric value '" + s + "' in column " + what);
    return v;
}

inline int parse_binary(const std::string& s, const std::string& what) {
    if (s == "0") return 0;
    if (s == "1") return 1;
    throw ValidationError("ingest: column " + what + " must be 0/1, got '" + s + "'");
}

// Resolves a column reference against the header.
inline Eigen::Index resolve_column(const ColumnRef& ref,
                                   const std::vector<std::string>& header,
                                   const std::string& role) {
    if (!ref.bound()) throw ValidationError("ingest: required column not bound: " + role);
    if (ref.spec[0] == '#') {
        const long pos = std::strtol(ref.spec.c_str() + 1, nullptr, 10);
        if (pos < 1 || static_cast<size_t>(pos) > header.size())
            throw ValidationError("ingest: position " + ref.spec + " out of range for " + role);
        return static_cast<Eigen::Index>(pos - 1);
    }
    for (size_t j = 0; j < header.size(); ++j)
        if (header[j] == ref.spec) return static_cast<Eigen::Index>(j);
    throw ValidationError("ingest: no column named '" + ref.spec + "' for role " + role);
}

}  // namespace detail

// Reads a delimited text file (comma or tab, auto-detected from the header
// row) into a SiteDataset. Rows with a missing bound field are dropped and
// counted; sites below min_site_size or lacking one of the two arms are
// dropped and listed; surviving site labels are mapped to dense indices in
// first-appearance order.
inline SiteDataset ingest(const std::string& path, const IngestOptions& opt,
                          IngestReport* report = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open input file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("input file is empty: " + path);
    const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
    const std::vector<std::string> header = detail::split_delimited(line, delim);

    const InputSchema& sc = opt.schema;
    const Eigen::Index cy = detail::resolve_column(sc.outcome, header, "outcome");
    const Eigen::Index cd = detail::resolve_column(sc.treatment, header, "treatment");
    const Eigen::Index cz = detail::resolve_column(sc.site, header, "site");
    Eigen::Index cw = -1, cpre = -1, cpost = -1;
    if (opt.mode == Mode::clate)
        cw = detail::resolve_column(sc.instrument, header, "instrument");
    if (opt.mode == Mode::did) {
        cpre = detail::resolve_column(sc.outcome_pre, header, "pre-period outcome");
        cpost = detail::resolve_column(sc.outcome_post, header, "post-period outcome");
    }

    std::vector<Eigen::Index> cx;
    std::vector<std::string> xnames;
    const bool rest = sc.covariates.size() == 1 && sc.covariates[0].spec == "rest";
    if (rest) {
        std::vector<bool> used(header.size(), false);
        for (Eigen::Index c : {cy, cd, cz, cw, cpre, cpost})
            if (c >= 0) used[static_cast<size_t>(c)] = true;
        for (size_t j = 0; j < header.size(); ++j)
            if (!used[j]) {
                cx.push_back(static_cast<Eigen::Index>(j));
                xnames.push_back(header[j]);
            }
    } else {
        for (const ColumnRef& ref : sc.covariates) {
            const Eigen::Index c = detail::resolve_column(ref, header, "covariate");
            cx.push_back(c);
            xnames.push_back(header[static_cast<size_t>(c)]);
        }
    }
    if (cx.empty()) throw ValidationError("ingest: at least one covariate column required");

    struct Row {
        double y = 0, y_pre = 0, y_post = 0;
        int d = 0, w = 0;
        std::string site;
        std::vector<double> x;
    };
    std::vector<Row> rows;
    Eigen::Index total = 0, kept = 0;
    auto field_at = [&](const std::vector<std::string>& f, Eigen::Index c) -> const std::string& {
        static const std::string empty;
        return static_cast<size_t>(c) < f.size() ? f[static_cast<size_t>(c)] : empty;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++total;
        const std::vector<std::string> f = detail::split_delimited(line, delim);
        std::vector<Eigen::Index> required = {cy, cd, cz};
        if (cw >= 0) required.push_back(cw);
        if (cpre >= 0) { required.push_back(cpre); required.push_back(cpost); }
        for (Eigen::Index c : cx) required.push_back(c);
        bool missing = false;
        for (Eigen::Index c : required)
            if (detail::is_missing(field_at(f, c))) { missing = true; break; }
        if (missing) continue;
        Row r;
        r.y = detail::parse_number(field_at(f, cy), "outcome");
        r.d = detail::parse_binary(field_at(f, cd), "treatment");
        r.site = field_at(f, cz);
        if (cw >= 0) r.w = detail::parse_binary(field_at(f, cw), "instrument");
        if (cpre >= 0) {
            r.y_pre = detail::parse_number(field_at(f, cpre), "pre-period outcome");
            r.y_post = detail::parse_number(field_at(f, cpost), "post-period outcome");
        }
        r.x.reserve(cx.size());
        for (Eigen::Index c : cx) r.x.push_back(detail::parse_number(field_at(f, c), "covariate"));
        rows.push_back(std::move(r));
        ++kept;
    }

    IngestReport rep;
    rep.rows_total = total;
    rep.rows_after_missing = kept;
    rep.covariate_names = xnames;

    // site-size filter
    std::map<std::string, Eigen::Index> site_counts;
    for (const Row& r : rows) ++site_counts[r.site];
    for (const auto& [label, count] : site_counts)
        if (count < opt.min_site_size) rep.dropped_small_sites.push_back(label);
    if (!rep.dropped_small_sites.empty()) {
        rows.erase(std::remove_if(rows.begin(), rows.end(),
                                  [&](const Row& r) {
                                      return site_counts[r.site] < opt.min_site_size;
                                  }),
                   rows.end());
    }
    rep.rows_after_site_size = static_cast<Eigen::Index>(rows.size());

    // drop sites lacking one of the two arms (treatment in cate/did,
    // instrument in clate)
    std::map<std::string, std::array<Eigen::Index, 2>> arm_counts;
    for (const Row& r : rows)
        ++arm_counts[r.site][static_cast<size_t>(opt.mode == Mode::clate ? r.w : r.d)];
    for (const auto& [label, counts] : arm_counts)
        if (counts[0] == 0 || counts[1] == 0) rep.dropped_one_armed_sites.push_back(label);
    if (!rep.dropped_one_armed_sites.empty()) {
        rows.erase(std::remove_if(rows.begin(), rows.end(),
                                  [&](const Row& r) {
                                      const auto& c = arm_counts[r.site];
                                      return c[0] == 0 || c[1] == 0;
                                  }),
                   rows.end());
    }
    rep.rows_final = static_cast<Eigen::Index>(rows.size());

    // dense site indices in first-appearance order
    std::map<std::string, int> site_index;
    for (const Row& r : rows)
        if (!site_index.count(r.site)) {
            const int next = static_cast<int>(site_index.size()) + 1;
            site_index[r.site] = next;
            rep.site_map.emplace_back(r.site, next);
        }
    if (site_index.size() < 2)
        throw ValidationError("ingest: fewer than 2 sites survive the filters");

    SiteDataset data;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    data.num_sites = static_cast<int>(site_index.size());
    data.y.resize(n);
    data.d.resize(n);
    data.z.resize(n);
    data.x.resize(n, static_cast<Eigen::Index>(cx.size()));
    if (cw >= 0) data.w = Eigen::VectorXi(n);
    if (cpre >= 0) {
        data.y_pre = Eigen::VectorXd(n);
        data.y_post = Eigen::VectorXd(n);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const Row& r = rows[static_cast<size_t>(i)];
        data.y[i] = r.y;
        data.d[i] = r.d;
        data.z[i] = site_index[r.site];
        for (size_t j = 0; j < r.x.size(); ++j)
            data.x(i, static_cast<Eigen::Index>(j)) = r.x[j];
        if (cw >= 0) (*data.w)[i] = r.w;
        if (cpre >= 0) {
            (*data.y_pre)[i] = r.y_pre;
            (*data.y_post)[i] = r.y_post;
        }
    }
    if (report) *report = rep;
    return data;
}

// Flat key = value config file; '#' starts a comment, blank lines ignored.
inline std::map<std::string, std::string> read_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t");
        return s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config: malformed line: " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

inline std::vector<ColumnRef> parse_column_list(const std::string& spec) {
    std::vector<ColumnRef> refs;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) refs.push_back(ColumnRef{item});
    return refs;
}

inline std::string ingest_summary(const IngestReport& rep) {
    std::ostringstream os;
    os << "rows in file:              " << rep.rows_total << "\n";
    os << "after missingness filter:  " << rep.rows_after_missing << "\n";
    os << "after site-size filter:    " << rep.rows_after_site_size << "\n";
    os << "final analysis sample:     " << rep.rows_final << "\n";
    if (!rep.dropped_small_sites.empty()) {
        os << "sites below threshold:";
        for (const auto& s : rep.dropped_small_sites) os << " " << s;
        os << "\n";
    }
    if (!rep.dropped_one_armed_sites.empty()) {
        os << "one-armed sites dropped:";
        for (const auto& s : rep.dropped_one_armed_sites) os << " " << s;
        os << "\n";
    }
    os << "site map:";
    for (const auto& [label, idx] : rep.site_map) os << " " << label << "->" << idx;
    os << "\n";
    return os.str();
}

}  // namespace homtest
