#pragma once

#include "nethawkes/core.hpp"
#include "nethawkes/netprior.hpp"
#include "nethawkes/random.hpp"
#include "nethawkes/vi.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>

namespace nethawkes::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Writes to a sibling temporary file and renames it over the target.
inline void atomic_write(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        }
        out << content;
        out.flush();
        if (!out) {
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_json(const fs::path& path, const json& j) { atomic_write(path, j.dump(2) + "\n"); }

inline fs::path sidecar_path(const fs::path& csv) {
    fs::path p = csv;
    p.replace_extension(".json");
    return p;
}

// Parses a headerless CSV of numbers into rows.
inline std::vector<std::vector<double>> read_numeric_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            std::size_t used = 0;
            double v;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": not a number: '" +
                                         cell + "'");
            }
            while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) {
                ++used;
            }
            if (used != cell.size()) {
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": not a number: '" +
                                         cell + "'");
            }
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw std::runtime_error(path.string() + ": no data rows");
    }
    return rows;
}

inline void write_counts(const fs::path& path, const CountMatrix& S, const std::string& description = "") {
    std::ostringstream os;
    for (std::size_t t = 0; t < S.T; ++t) {
        for (std::size_t k = 0; k < S.K; ++k) {
            if (k) {
                os << ',';
            }
            os << S(t, k);
        }
        os << '\n';
    }
    atomic_write(path, os.str());
    write_json(sidecar_path(path), json{{"T", S.T}, {"K", S.K}, {"dt", S.dt}, {"description", description}});
}

// Reads counts and the optional sidecar; without a sidecar the bin width defaults to 1.
inline CountMatrix read_counts(const fs::path& path) {
    const auto rows = read_numeric_csv(path);
    double dt = 1.0;
    const fs::path side = sidecar_path(path);
    if (fs::exists(side)) {
        const json j = read_json(side);
        dt = j.value("dt", 1.0);
        if (j.contains("T") && j["T"].get<std::size_t>() != rows.size()) {
            throw std::runtime_error(path.string() + ": row count disagrees with the sidecar");
        }
        if (j.contains("K") && j["K"].get<std::size_t>() != rows.front().size()) {
            throw std::runtime_error(path.string() + ": column count disagrees with the sidecar");
        }
    }
    CountMatrix S(rows.size(), rows.front().size(), dt);
    for (std::size_t t = 0; t < S.T; ++t) {
        for (std::size_t k = 0; k < S.K; ++k) {
            const double v = rows[t][k];
            if (v < 0.0 || v != std::floor(v) || v > 2147483647.0) {
                throw std::runtime_error(path.string() + ": counts must be nonnegative integers");
            }
            S(t, k) = static_cast<Count>(v);
        }
    }
    return S;
}

inline Matrix<double> read_real_matrix(const fs::path& path) {
    const auto rows = read_numeric_csv(path);
    Matrix<double> m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    }
    return m;
}

template <typename T>
std::string matrix_csv(const Matrix<T>& m) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) {
                os << ',';
            }
            if constexpr (std::is_same_v<T, std::uint8_t>) {
                os << static_cast<int>(m(r, c));
            } else {
                os << m(r, c);
            }
        }
        os << '\n';
    }
    return os.str();
}

template <typename T>
json matrix_json(const Matrix<T>& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

template <typename T>
Matrix<T> matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty() || !j.front().is_array()) {
        throw std::runtime_error("expected a non-empty array of rows");
    }
    Matrix<T> m(j.size(), j.front().size());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        if (j[r].size() != m.cols()) {
            throw std::runtime_error("ragged matrix in JSON");
        }
        for (std::size_t c = 0; c < m.cols(); ++c) {
            m(r, c) = j[r][c].get<T>();
        }
    }
    return m;
}

inline json tensor_json(const Tensor3<double>& t) {
    json out = json::array();
    for (std::size_t i = 0; i < t.dim0(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < t.dim1(); ++j) {
            const auto f = t.fiber(i, j);
            row.push_back(std::vector<double>(f.begin(), f.end()));
        }
        out.push_back(std::move(row));
    }
    return out;
}

inline Tensor3<double> tensor_from_json(const json& j) {
    if (!j.is_array() || j.empty() || j.front().empty()) {
        throw std::runtime_error("expected a non-empty 3-D array");
    }
    Tensor3<double> t(j.size(), j.front().size(), j.front().front().size());
    for (std::size_t a = 0; a < t.dim0(); ++a) {
        for (std::size_t b = 0; b < t.dim1(); ++b) {
            const auto v = j.at(a).at(b).get<std::vector<double>>();
            if (v.size() != t.dim2()) {
                throw std::runtime_error("ragged 3-D array in JSON");
            }
            std::copy(v.begin(), v.end(), t.fiber(a, b).begin());
        }
    }
    return t;
}

inline json params_json(const ModelParams& p) {
    return json{{"K", p.K()},
                {"B", p.B()},
                {"lambda0", p.lambda0},
                {"A", matrix_json(p.A)},
                {"W", matrix_json(p.W)},
                {"g", tensor_json(p.g)}};
}

inline ModelParams params_from_json(const json& j) {
    ModelParams p;
    p.lambda0 = j.at("lambda0").get<std::vector<double>>();
    p.A = matrix_from_json<std::uint8_t>(j.at("A"));
    p.W = matrix_from_json<double>(j.at("W"));
    p.g = tensor_from_json(j.at("g"));
    p.validate();
    return p;
}

inline json basis_json(const BasisSet& b) {
    return json{{"B", b.B}, {"D", b.D}, {"dt", b.dt}, {"filters", b.filters}};
}

inline BasisSet basis_from_json(const json& j) {
    BasisSet b{j.at("B").get<std::size_t>(), j.at("D").get<std::size_t>(), j.at("dt").get<double>(),
               j.at("filters").get<std::vector<double>>()};
    b.validate();
    return b;
}

inline json hyper_json(const HyperParams& h) {
    return json{{"alpha_lambda", h.alpha_lambda}, {"beta_lambda", h.beta_lambda}, {"gamma", h.gamma},
                {"kappa", h.kappa},               {"kappa0", h.kappa0},           {"nu0", h.nu0}};
}

inline json prior_json(const ErdosRenyiPrior& pr) {
    const auto& c = pr.config();
    json j{{"tau1", c.tau1},
           {"tau0", c.tau0},
           {"alpha_v", c.alpha_v},
           {"beta_v", c.beta_v},
           {"fixed_p", c.fixed_p ? json(*c.fixed_p) : json(nullptr)},
           {"fixed_v", c.fixed_v ? json(*c.fixed_v) : json(nullptr)},
           {"p", pr.p()},
           {"v", pr.v()},
           {"q_p", {pr.beta_a(), pr.beta_b()}},
           {"q_v", {pr.gamma_shape(), pr.gamma_rate()}}};
    return j;
}

// Restores the dynamic parts of a prior state (point values and variational factors).
inline void restore_prior(ErdosRenyiPrior& pr, const json& j) {
    pr.set_point(j.at("p").get<double>(), j.at("v").get<double>());
    const auto qp = j.at("q_p").get<std::vector<double>>();
    const auto qv = j.at("q_v").get<std::vector<double>>();
    pr.set_variational(qp.at(0), qp.at(1), qv.at(0), qv.at(1));
}

inline json variational_json(const VariationalState& q) {
    return json{{"alpha", q.alpha},
                {"beta", q.beta},
                {"gamma", tensor_json(q.gamma)},
                {"gamma_target", tensor_json(q.gamma_target)},
                {"p", matrix_json(q.p)},
                {"kappa1", matrix_json(q.kappa1)},
                {"v1", matrix_json(q.v1)},
                {"kappa0", matrix_json(q.kappa0)},
                {"v0", matrix_json(q.v0)},
                {"iteration", q.iteration}};
}

inline VariationalState variational_from_json(const json& j) {
    VariationalState q;
    q.alpha = j.at("alpha").get<std::vector<double>>();
    q.beta = j.at("beta").get<std::vector<double>>();
    q.gamma = tensor_from_json(j.at("gamma"));
    q.gamma_target = tensor_from_json(j.at("gamma_target"));
    q.p = matrix_from_json<double>(j.at("p"));
    q.kappa1 = matrix_from_json<double>(j.at("kappa1"));
    q.v1 = matrix_from_json<double>(j.at("v1"));
    q.kappa0 = matrix_from_json<double>(j.at("kappa0"));
    q.v0 = matrix_from_json<double>(j.at("v0"));
    q.iteration = j.at("iteration").get<std::size_t>();
    q.validate();
    return q;
}

} // namespace nethawkes::io
