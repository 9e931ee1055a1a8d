#pragma once

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>

#include "issa/exponent.hpp"
#include "issa/structure.hpp"
#include "issa/system.hpp"

namespace issa {

using json = nlohmann::json;

namespace detail {

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty())
        throw std::invalid_argument(where + ": expected a non-empty array of rows");
    const size_t rows = j.size();
    const size_t cols = j[0].is_array() ? j[0].size() : 0;
    if (cols == 0) throw std::invalid_argument(where + ": rows must be non-empty arrays");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw std::invalid_argument(where + ": row " + std::to_string(i) + " has inconsistent length");
        for (size_t k = 0; k < cols; ++k) {
            if (!j[i][k].is_number())
                throw std::invalid_argument(where + ": entry (" + std::to_string(i) + "," + std::to_string(k) +
                                            ") is not a number");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
        }
    }
    return m;
}

// JSON has no infinities; encode them as strings.
inline json real_to_json(double v) {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    return v;
}

inline double real_from_json(const json& j, const std::string& where) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf" || s == "+inf") return kInf;
        if (s == "-inf") return -kInf;
    }
    throw std::invalid_argument(where + ": expected a number or \"inf\"/\"-inf\"");
}

inline json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    return j;
}

}  // namespace detail

// ---------------------------------------------------------------- systems --

inline ImpulsiveSystem system_from_json(const json& j) {
    ImpulsiveSystem sys;
    if (!j.contains("dim") || !j["dim"].is_number_integer())
        throw std::invalid_argument("system: missing integer field \"dim\"");
    if (!j.contains("tau") || !j["tau"].is_number())
        throw std::invalid_argument("system: missing numeric field \"tau\"");
    if (!j.contains("modes") || !j["modes"].is_array() || j["modes"].empty())
        throw std::invalid_argument("system: missing non-empty array \"modes\"");
    sys.dim = j["dim"].get<int>();
    sys.tau = j["tau"].get<double>();
    for (size_t i = 0; i < j["modes"].size(); ++i) {
        const json& jm = j["modes"][i];
        const std::string where = "system: mode " + std::to_string(i);
        if (!jm.contains("Z1") || !jm.contains("Z2"))
            throw std::invalid_argument(where + ": needs \"Z1\" and \"Z2\"");
        Mode m;
        m.z1 = detail::matrix_from_json(jm["Z1"], where + ": Z1");
        m.z2 = detail::matrix_from_json(jm["Z2"], where + ": Z2");
        if (m.z1.rows() != sys.dim || m.z1.cols() != sys.dim)
            throw std::invalid_argument(where + ": Z1 is not " + std::to_string(sys.dim) + "x" +
                                        std::to_string(sys.dim));
        if (m.z2.rows() != sys.dim || m.z2.cols() != sys.dim)
            throw std::invalid_argument(where + ": Z2 is not " + std::to_string(sys.dim) + "x" +
                                        std::to_string(sys.dim));
        sys.modes.push_back(std::move(m));
    }
    sys.validate();
    return sys;
}

inline json system_to_json(const ImpulsiveSystem& sys) {
    json j;
    j["dim"] = sys.dim;
    j["tau"] = sys.tau;
    j["modes"] = json::array();
    for (const Mode& m : sys.modes)
        j["modes"].push_back({{"Z1", detail::matrix_to_json(m.z1)}, {"Z2", detail::matrix_to_json(m.z2)}});
    return j;
}

inline ImpulsiveSystem load_system(const std::string& path) { return system_from_json(detail::parse_file(path)); }

// ---------------------------------------------------------------- signals --

inline SwitchingSignal signal_from_json(const json& j, const ImpulsiveSystem& sys) {
    SwitchingSignal sig;
    if (!j.contains("segments") || !j["segments"].is_array())
        throw std::invalid_argument("signal: missing array \"segments\"");
    if (!j.contains("tail_mode") || !j["tail_mode"].is_number_integer())
        throw std::invalid_argument("signal: missing integer field \"tail_mode\"");
    for (size_t i = 0; i < j["segments"].size(); ++i) {
        const json& js = j["segments"][i];
        if (!js.contains("mode") || !js.contains("duration"))
            throw std::invalid_argument("signal: segment " + std::to_string(i) +
                                        ": needs \"mode\" and \"duration\"");
        sig.segments.push_back(Segment{js["mode"].get<int>(), js["duration"].get<double>()});
    }
    sig.tail_mode = j["tail_mode"].get<int>();
    validate_signal(sys, sig);
    return sig;
}

inline json signal_to_json(const SwitchingSignal& sig) {
    json j;
    j["segments"] = json::array();
    for (const Segment& s : sig.segments)
        j["segments"].push_back({{"mode", s.mode}, {"duration", s.duration}});
    j["tail_mode"] = sig.tail_mode;
    return j;
}

inline SwitchingSignal load_signal(const std::string& path, const ImpulsiveSystem& sys) {
    return signal_from_json(detail::parse_file(path), sys);
}

// -------------------------------------------------- weighted systems (bw) --

inline WeightedSystem weighted_from_json(const json& j) {
    WeightedSystem ws;
    if (!j.contains("dim") || !j["dim"].is_number_integer())
        throw std::invalid_argument("weighted system: missing integer field \"dim\"");
    if (!j.contains("atoms") || !j["atoms"].is_array() || j["atoms"].empty())
        throw std::invalid_argument("weighted system: missing non-empty array \"atoms\"");
    ws.dim = j["dim"].get<int>();
    for (size_t i = 0; i < j["atoms"].size(); ++i) {
        const json& ja = j["atoms"][i];
        const std::string where = "weighted system: atom " + std::to_string(i);
        if (ja.contains("A")) {
            if (!ja.contains("w")) throw std::invalid_argument(where + ": explicit atom needs \"w\"");
            ws.atoms.push_back(ExplicitAtom{detail::matrix_from_json(ja["A"], where + ": A"), ja["w"].get<double>()});
        } else if (ja.contains("Z1") && ja.contains("Z2")) {
            FlowFamily f;
            f.z1 = detail::matrix_from_json(ja["Z1"], where + ": Z1");
            f.z2 = detail::matrix_from_json(ja["Z2"], where + ": Z2");
            f.t_lo = ja.value("t_lo", 0.0);
            f.t_hi = ja.contains("t_hi") ? detail::real_from_json(ja["t_hi"], where + ": t_hi") : kInf;
            ws.atoms.push_back(std::move(f));
        } else {
            throw std::invalid_argument(where + ": needs either {A, w} or {Z1, Z2, t_lo, t_hi}");
        }
    }
    ws.validate();
    return ws;
}

// ---------------------------------------------------------------- reports --

inline json word_to_json(const Word& w) {
    json arr = json::array();
    for (const Letter& l : w.letters) arr.push_back({{"mode", l.atom}, {"t", l.t}});
    return arr;
}

inline json report_to_json(const BoundsReport& r) {
    json j;
    j["lambda_lo"] = detail::real_to_json(r.lambda_lo);
    j["lambda_hi"] = detail::real_to_json(r.lambda_hi);
    j["alpha_max"] = detail::real_to_json(r.alpha_max);
    j["mu_lo"] = detail::real_to_json(r.mu_lo);
    j["class"] = to_string(r.cls);
    if (r.best_word) j["best_word"] = word_to_json(*r.best_word);
    if (!r.warning.empty()) j["warning"] = r.warning;
    if (r.certificate) {
        j["upper_certificate"] = {{"xi", r.certificate->xi},
                                  {"q", r.certificate->q},
                                  {"horizon", r.certificate->horizon},
                                  {"t_max", r.certificate->t_max},
                                  {"rate", r.certificate->rate},
                                  {"c", r.certificate->c},
                                  {"blocks", r.certificate->blocks},
                                  {"max_block_len", r.certificate->max_block_len}};
    }
    return j;
}

inline json certificate_to_json(const LyapunovCertificate& cert) {
    json j;
    j["gamma"] = cert.gamma;
    j["c"] = cert.c;
    j["products"] = json::array();
    for (const auto& [pi, w] : cert.products)
        j["products"].push_back({{"Pi", detail::matrix_to_json(pi)}, {"weight", w}});
    return j;
}

inline LyapunovCertificate certificate_from_json(const json& j) {
    LyapunovCertificate cert;
    cert.gamma = j.at("gamma").get<double>();
    cert.c = j.at("c").get<double>();
    for (const json& jp : j.at("products"))
        cert.products.emplace_back(detail::matrix_from_json(jp.at("Pi"), "certificate: Pi"),
                                   jp.at("weight").get<double>());
    return cert;
}

inline json structure_report_to_json(const FlagDecomposition& flag, const IrreducibilityResult& irr,
                                     const JumpBoundednessResult& jumps) {
    json j;
    j["block_dims"] = flag.block_dims;
    j["P"] = detail::matrix_to_json(flag.p);
    j["irreducible"] = irr.irreducible;
    if (!irr.irreducible) j["witness_basis"] = detail::matrix_to_json(irr.witness->basis);
    j["irreducible_note"] =
        irr.irreducible ? "probabilistic-complete: no invariant subspace found among candidate closures"
                        : "certified: witness basis spans a common invariant subspace";
    switch (jumps.verdict) {
        case JumpBoundednessResult::Verdict::Bounded:
            j["jump_products"] = {{"verdict", "Bounded"}, {"C", jumps.c}, {"detail", jumps.detail}};
            break;
        case JumpBoundednessResult::Verdict::Unbounded:
            j["jump_products"] = {{"verdict", "Unbounded"}, {"witness", jumps.witness}, {"detail", jumps.detail}};
            break;
        case JumpBoundednessResult::Verdict::Unknown:
            j["jump_products"] = {{"verdict", "Unknown"}, {"detail", jumps.detail}};
            break;
    }
    return j;
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace issa
