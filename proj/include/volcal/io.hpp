#pragma once
// Surface persistence: a versioned length-prefixed binary format with a CRC32
// integrity check, and a lossless JSON alternative.  Both round-trip every
// double bit-for-bit, so a reloaded surface reprices identically.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "volcal/surface.hpp"

namespace volcal {

struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr char kMagic[8] = {'V', 'O', 'L', 'C', 'S', 'R', 'F', '1'};

[[nodiscard]] inline std::uint32_t crc32(const void* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i)
        crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

class ByteWriter {
  public:
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void i32(std::int32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void vec(const std::vector<double>& v) {
        u64(v.size());
        if (!v.empty()) raw(v.data(), v.size() * sizeof(double));
    }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    [[nodiscard]] const std::string& buffer() const { return buf_; }

  private:
    void raw(const void* p, std::size_t n) {
        buf_.append(static_cast<const char*>(p), n);
    }
    std::string buf_;
};

class ByteReader {
  public:
    ByteReader(const char* data, std::size_t len) : p_(data), n_(len) {}
    [[nodiscard]] std::uint8_t u8() { return get<std::uint8_t>(); }
    [[nodiscard]] std::uint32_t u32() { return get<std::uint32_t>(); }
    [[nodiscard]] std::int32_t i32() { return get<std::int32_t>(); }
    [[nodiscard]] std::uint64_t u64() { return get<std::uint64_t>(); }
    [[nodiscard]] double f64() { return get<double>(); }
    [[nodiscard]] std::vector<double> vec() {
        const std::uint64_t m = u64();
        need(m * sizeof(double));
        std::vector<double> v(m);
        if (m) std::memcpy(v.data(), p_ + pos_, m * sizeof(double));
        pos_ += m * sizeof(double);
        return v;
    }
    [[nodiscard]] std::string str() {
        const std::uint64_t m = u64();
        need(m);
        std::string s(p_ + pos_, m);
        pos_ += m;
        return s;
    }
    [[nodiscard]] bool exhausted() const { return pos_ == n_; }

  private:
    template <class T>
    [[nodiscard]] T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, p_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::uint64_t m) const {
        if (pos_ + m > n_) throw LoadError("surface payload truncated");
    }
    const char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

inline void write_slice(ByteWriter& w, const CalibratedSlice& cs) {
    const TransitionProblem& p = cs.problem;
    w.f64(p.prev_maturity);
    w.f64(p.maturity);
    w.f64(p.scale);
    w.u8(p.truncate_at_zero ? 1 : 0);
    w.f64(p.prior.sigma0);
    w.f64(p.prior.beta);
    w.vec(p.grid);
    w.vec(p.mass);
    w.vec(p.strikes);
    w.vec(p.mid);
    w.vec(p.omega);
    w.vec(p.delta_bid);
    w.vec(p.delta_ask);
    w.f64(cs.prior_fit.params.sigma0);
    w.f64(cs.prior_fit.params.beta);
    w.f64(cs.prior_fit.objective);
    w.u8(cs.prior_fit.at_boundary ? 1 : 0);
    w.vec(cs.dual.u);
    w.vec(cs.dual.h);
    w.vec(cs.dual.v);
    w.f64(cs.marginal.maturity);
    w.vec(cs.marginal.grid);
    w.vec(cs.marginal.mass);
    w.f64(cs.disc_a);
    w.f64(cs.disc_b);
    w.f64(cs.disc_error_bound);
    w.u32(static_cast<std::uint32_t>(cs.trace.size()));
    for (const auto& r : cs.trace) {
        w.i32(r.iter);
        w.f64(r.g);
        w.f64(r.grad_inf);
        w.f64(r.marginal_err);
        w.f64(r.mart_err);
        w.f64(r.band_viol);
    }
    w.f64(cs.lambda_hat);
    w.u8(cs.rate_stalled ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(cs.iterations));
    w.f64(cs.final_grad_inf);
    w.f64(cs.monotone_violation);
}

[[nodiscard]] inline CalibratedSlice read_slice(ByteReader& r) {
    CalibratedSlice cs;
    TransitionProblem& p = cs.problem;
    p.prev_maturity = r.f64();
    p.maturity = r.f64();
    p.scale = r.f64();
    p.truncate_at_zero = r.u8() != 0;
    p.prior.sigma0 = r.f64();
    p.prior.beta = r.f64();
    p.grid = r.vec();
    p.mass = r.vec();
    p.strikes = r.vec();
    p.mid = r.vec();
    p.omega = r.vec();
    p.delta_bid = r.vec();
    p.delta_ask = r.vec();
    cs.prior_fit.params.sigma0 = r.f64();
    cs.prior_fit.params.beta = r.f64();
    cs.prior_fit.objective = r.f64();
    cs.prior_fit.at_boundary = r.u8() != 0;
    cs.dual.u = r.vec();
    cs.dual.h = r.vec();
    cs.dual.v = r.vec();
    cs.marginal.maturity = r.f64();
    cs.marginal.grid = r.vec();
    cs.marginal.mass = r.vec();
    cs.disc_a = r.f64();
    cs.disc_b = r.f64();
    cs.disc_error_bound = r.f64();
    const std::uint32_t nrows = r.u32();
    cs.trace.resize(nrows);
    for (auto& row : cs.trace) {
        row.iter = r.i32();
        row.g = r.f64();
        row.grad_inf = r.f64();
        row.marginal_err = r.f64();
        row.mart_err = r.f64();
        row.band_viol = r.f64();
    }
    cs.lambda_hat = r.f64();
    cs.rate_stalled = r.u8() != 0;
    cs.iterations = static_cast<int>(r.u32());
    cs.final_grad_inf = r.f64();
    cs.monotone_violation = r.f64();
    return cs;
}

}  // namespace detail

// --- binary format ----------------------------------------------------------

inline void save_surface(const CalibratedSurface& surf, std::ostream& os) {
    detail::ByteWriter w;
    w.f64(surf.spot);
    w.f64(surf.lambda);
    w.u32(static_cast<std::uint32_t>(surf.grid_n));
    w.f64(surf.tail_tol);
    w.f64(surf.grad_tol_rel);
    w.u8(surf.truncate_at_zero ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(surf.warnings.size()));
    for (const auto& s : surf.warnings) w.str(s);
    w.u32(static_cast<std::uint32_t>(surf.slices.size()));
    for (const auto& cs : surf.slices) detail::write_slice(w, cs);

    const std::string& payload = w.buffer();
    os.write(detail::kMagic, sizeof(detail::kMagic));
    const std::uint64_t len = payload.size();
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    const std::uint32_t crc = detail::crc32(payload.data(), payload.size());
    os.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
    if (!os) throw std::runtime_error("save_surface: write failed");
}

[[nodiscard]] inline CalibratedSurface load_surface_binary(std::istream& is) {
    char magic[sizeof(detail::kMagic)];
    if (!is.read(magic, sizeof(magic)))
        throw LoadError("surface file truncated (missing header)");
    if (std::memcmp(magic, detail::kMagic, sizeof(magic)) != 0)
        throw LoadError("not a surface file (bad magic)");
    std::uint64_t len = 0;
    if (!is.read(reinterpret_cast<char*>(&len), sizeof(len)))
        throw LoadError("surface file truncated (missing length)");
    if (len > (1ull << 32))
        throw LoadError("surface payload length implausible");
    std::string payload(len, '\0');
    if (!is.read(payload.data(), static_cast<std::streamsize>(len)))
        throw LoadError("surface file truncated (short payload)");
    std::uint32_t crc = 0;
    if (!is.read(reinterpret_cast<char*>(&crc), sizeof(crc)))
        throw LoadError("surface file truncated (missing checksum)");
    if (crc != detail::crc32(payload.data(), payload.size()))
        throw LoadError("surface file corrupted (checksum mismatch)");

    detail::ByteReader r(payload.data(), payload.size());
    CalibratedSurface surf;
    surf.spot = r.f64();
    surf.lambda = r.f64();
    surf.grid_n = static_cast<int>(r.u32());
    surf.tail_tol = r.f64();
    surf.grad_tol_rel = r.f64();
    surf.truncate_at_zero = r.u8() != 0;
    const std::uint32_t nw = r.u32();
    surf.warnings.resize(nw);
    for (auto& s : surf.warnings) s = r.str();
    const std::uint32_t ns = r.u32();
    surf.slices.reserve(ns);
    for (std::uint32_t i = 0; i < ns; ++i)
        surf.slices.push_back(detail::read_slice(r));
    return surf;
}

// --- JSON format ------------------------------------------------------------

[[nodiscard]] inline nlohmann::json surface_to_json(
    const CalibratedSurface& surf) {
    nlohmann::json j;
    j["format"] = "volcal-surface";
    j["version"] = 1;
    j["spot"] = surf.spot;
    j["lambda"] = surf.lambda;
    j["grid_n"] = surf.grid_n;
    j["tail_tol"] = surf.tail_tol;
    j["grad_tol_rel"] = surf.grad_tol_rel;
    j["truncate_at_zero"] = surf.truncate_at_zero;
    j["warnings"] = surf.warnings;
    j["slices"] = nlohmann::json::array();
    for (const auto& cs : surf.slices) {
        nlohmann::json s;
        const TransitionProblem& p = cs.problem;
        s["prev_maturity"] = p.prev_maturity;
        s["maturity"] = p.maturity;
        s["scale"] = p.scale;
        s["truncate_at_zero"] = p.truncate_at_zero;
        s["prior"] = {{"sigma0", p.prior.sigma0}, {"beta", p.prior.beta}};
        s["grid"] = p.grid;
        s["mass"] = p.mass;
        s["strikes"] = p.strikes;
        s["mid"] = p.mid;
        s["omega"] = p.omega;
        s["delta_bid"] = p.delta_bid;
        s["delta_ask"] = p.delta_ask;
        s["prior_fit"] = {{"sigma0", cs.prior_fit.params.sigma0},
                          {"beta", cs.prior_fit.params.beta},
                          {"objective", cs.prior_fit.objective},
                          {"at_boundary", cs.prior_fit.at_boundary}};
        s["u"] = cs.dual.u;
        s["h"] = cs.dual.h;
        s["v"] = cs.dual.v;
        s["marginal"] = {{"maturity", cs.marginal.maturity},
                         {"grid", cs.marginal.grid},
                         {"mass", cs.marginal.mass}};
        s["disc_a"] = cs.disc_a;
        s["disc_b"] = cs.disc_b;
        s["disc_error_bound"] = cs.disc_error_bound;
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : cs.trace)
            rows.push_back({r.iter, r.g, r.grad_inf, r.marginal_err,
                            r.mart_err, r.band_viol});
        s["trace"] = rows;
        s["lambda_hat"] = cs.lambda_hat;
        s["rate_stalled"] = cs.rate_stalled;
        s["iterations"] = cs.iterations;
        s["final_grad_inf"] = cs.final_grad_inf;
        s["monotone_violation"] = cs.monotone_violation;
        j["slices"].push_back(std::move(s));
    }
    return j;
}

[[nodiscard]] inline CalibratedSurface surface_from_json(
    const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "volcal-surface")
        throw LoadError("not a surface JSON document");
    CalibratedSurface surf;
    surf.spot = j.at("spot").get<double>();
    surf.lambda = j.at("lambda").get<double>();
    surf.grid_n = j.at("grid_n").get<int>();
    surf.tail_tol = j.at("tail_tol").get<double>();
    surf.grad_tol_rel = j.at("grad_tol_rel").get<double>();
    surf.truncate_at_zero = j.at("truncate_at_zero").get<bool>();
    surf.warnings = j.at("warnings").get<std::vector<std::string>>();
    for (const auto& s : j.at("slices")) {
        CalibratedSlice cs;
        TransitionProblem& p = cs.problem;
        p.prev_maturity = s.at("prev_maturity").get<double>();
        p.maturity = s.at("maturity").get<double>();
        p.scale = s.at("scale").get<double>();
        p.truncate_at_zero = s.at("truncate_at_zero").get<bool>();
        p.prior.sigma0 = s.at("prior").at("sigma0").get<double>();
        p.prior.beta = s.at("prior").at("beta").get<double>();
        p.grid = s.at("grid").get<std::vector<double>>();
        p.mass = s.at("mass").get<std::vector<double>>();
        p.strikes = s.at("strikes").get<std::vector<double>>();
        p.mid = s.at("mid").get<std::vector<double>>();
        p.omega = s.at("omega").get<std::vector<double>>();
        p.delta_bid = s.at("delta_bid").get<std::vector<double>>();
        p.delta_ask = s.at("delta_ask").get<std::vector<double>>();
        cs.prior_fit.params.sigma0 = s.at("prior_fit").at("sigma0").get<double>();
        cs.prior_fit.params.beta = s.at("prior_fit").at("beta").get<double>();
        cs.prior_fit.objective = s.at("prior_fit").at("objective").get<double>();
        cs.prior_fit.at_boundary = s.at("prior_fit").at("at_boundary").get<bool>();
        cs.dual.u = s.at("u").get<std::vector<double>>();
        cs.dual.h = s.at("h").get<std::vector<double>>();
        cs.dual.v = s.at("v").get<std::vector<double>>();
        cs.marginal.maturity = s.at("marginal").at("maturity").get<double>();
        cs.marginal.grid = s.at("marginal").at("grid").get<std::vector<double>>();
        cs.marginal.mass = s.at("marginal").at("mass").get<std::vector<double>>();
        cs.disc_a = s.at("disc_a").get<double>();
        cs.disc_b = s.at("disc_b").get<double>();
        cs.disc_error_bound = s.at("disc_error_bound").get<double>();
        for (const auto& r : s.at("trace")) {
            TraceRow row;
            row.iter = r.at(0).get<int>();
            row.g = r.at(1).get<double>();
            row.grad_inf = r.at(2).get<double>();
            row.marginal_err = r.at(3).get<double>();
            row.mart_err = r.at(4).get<double>();
            row.band_viol = r.at(5).get<double>();
            cs.trace.push_back(row);
        }
        cs.lambda_hat = s.at("lambda_hat").get<double>();
        cs.rate_stalled = s.at("rate_stalled").get<bool>();
        cs.iterations = s.at("iterations").get<int>();
        cs.final_grad_inf = s.at("final_grad_inf").get<double>();
        cs.monotone_violation = s.at("monotone_violation").get<double>();
        surf.slices.push_back(std::move(cs));
    }
    return surf;
}

inline void save_surface_json(const CalibratedSurface& surf,
                              std::ostream& os) {
    os << surface_to_json(surf).dump(2) << '\n';
    if (!os) throw std::runtime_error("save_surface_json: write failed");
}

[[nodiscard]] inline CalibratedSurface load_surface_json(std::istream& is) {
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("surface JSON parse error: ") + e.what());
    }
    return surface_from_json(j);
}

// Loads either format, sniffing the leading bytes.
[[nodiscard]] inline CalibratedSurface load_surface(std::istream& is) {
    const int c = is.peek();
    if (c == '{') return load_surface_json(is);
    return load_surface_binary(is);
}

[[nodiscard]] inline CalibratedSurface load_surface_file(
    const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open surface file: " + path);
    return load_surface(is);
}

inline void save_surface_file(const CalibratedSurface& surf,
                              const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0)
        save_surface_json(surf, os);
    else
        save_surface(surf, os);
}

// --- CSV output -------------------------------------------------------------

inline void write_smile_csv(const std::vector<SmilePoint>& pts,
                            std::ostream& os) {
    os << "strike,price,implied_vol\n";
    os.precision(17);
    for (const auto& p : pts) {
        os << p.strike << ',' << p.price << ',';
        if (p.implied_vol) os << *p.implied_vol;
        os << '\n';
    }
}

inline void write_surface_export_csv(const CalibratedSurface& surf,
                                     const std::vector<double>& strikes,
                                     std::ostream& os) {
    os << "maturity,strike,price,implied_vol\n";
    os.precision(17);
    for (std::size_t i = 0; i < surf.slices.size(); ++i) {
        const auto pts = query_smile(surf, i, strikes);
        for (const auto& p : pts) {
            os << surf.slices[i].problem.maturity << ',' << p.strike << ','
               << p.price << ',';
            if (p.implied_vol) os << *p.implied_vol;
            os << '\n';
        }
    }
}

}  // namespace volcal
