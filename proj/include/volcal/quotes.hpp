#pragma once
// Market-quote ingestion: CSV parsing, validation, grouping into maturity
// slices, and the penalty weights attached to each strike.
//
// File format: one preamble line `spot,<value>`, then a header line
// `maturity,strike,bid,ask`, then one quote per row.  Decimal '.', UTF-8,
// LF or CRLF.  Prices are absolute (same units as spot), maturities are
// year-fractions, and inputs are assumed pre-discounted (zero rates/yields).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace volcal {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Quote {
    double maturity = 0.0;
    double strike = 0.0;
    double bid = 0.0;
    double ask = 0.0;
};

// One maturity's quotes, strikes strictly increasing.
struct QuoteSlice {
    double maturity = 0.0;
    double spot = 0.0;
    double lambda = 0.1;  // regularization scale for the penalty weights
    std::vector<Quote> quotes;
};

// Slice plus derived per-strike quantities used by the dual objective:
// mid = (bid+ask)/2, omega = penalty weight, delta_bid/ask = bid/ask - mid.
struct WeightedSlice {
    QuoteSlice slice;
    std::vector<double> mid;
    std::vector<double> omega;
    std::vector<double> delta_bid;
    std::vector<double> delta_ask;

    [[nodiscard]] std::size_t size() const { return slice.quotes.size(); }
    [[nodiscard]] double strike(std::size_t j) const {
        return slice.quotes[j].strike;
    }
    [[nodiscard]] std::vector<double> strikes() const {
        std::vector<double> k(size());
        for (std::size_t j = 0; j < size(); ++j) k[j] = strike(j);
        return k;
    }
};

struct QuoteSet {
    double spot = 0.0;
    std::vector<QuoteSlice> slices;          // sorted by maturity
    std::vector<std::string> warnings;       // dropped rows etc.
};

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_number(const std::string& s, std::size_t lineno,
                           const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
            ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(lineno) + ": cannot parse " +
                         what + " from '" + s + "'");
    }
}

inline std::string strip_eol(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
        line.pop_back();
    return line;
}

}  // namespace detail

// Parses the quote CSV described above.  Slices come back sorted by maturity
// with strikes ascending.  Malformed rows raise ParseError with the line
// number; crossed quotes (bid > ask), duplicate (maturity, strike) pairs, and
// non-positive strikes/maturities raise ValidationError.  Rows with
// bid == ask == 0 carry no information and are dropped with a warning.
[[nodiscard]] inline QuoteSet parse_quotes(std::istream& in,
                                           double lambda = 0.1) {
    QuoteSet qs;
    std::string line;
    std::size_t lineno = 0;

    if (!std::getline(in, line))
        throw ParseError("empty input: expected `spot,<value>` preamble");
    ++lineno;
    {
        auto fields = detail::split_csv_row(detail::strip_eol(line));
        if (fields.size() != 2 || fields[0] != "spot")
            throw ParseError("line 1: expected preamble `spot,<value>`");
        qs.spot = detail::parse_number(fields[1], lineno, "spot");
        if (!(qs.spot > 0.0))
            throw ValidationError("line 1: spot must be positive");
    }

    if (!std::getline(in, line))
        throw ParseError("missing header `maturity,strike,bid,ask`");
    ++lineno;
    if (detail::strip_eol(line) != "maturity,strike,bid,ask")
        throw ParseError("line 2: expected header `maturity,strike,bid,ask`");

    std::map<double, std::map<double, Quote>> by_maturity;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string row = detail::strip_eol(line);
        if (row.empty()) continue;
        auto fields = detail::split_csv_row(row);
        if (fields.size() != 4)
            throw ParseError("line " + std::to_string(lineno) +
                             ": expected 4 fields, got " +
                             std::to_string(fields.size()));
        Quote q;
        q.maturity = detail::parse_number(fields[0], lineno, "maturity");
        q.strike = detail::parse_number(fields[1], lineno, "strike");
        q.bid = detail::parse_number(fields[2], lineno, "bid");
        q.ask = detail::parse_number(fields[3], lineno, "ask");

        const std::string at = "line " + std::to_string(lineno) + ": ";
        if (!(q.maturity > 0.0))
            throw ValidationError(at + "maturity must be > 0");
        if (!(q.strike > 0.0)) throw ValidationError(at + "strike must be > 0");
        if (q.bid < 0.0) throw ValidationError(at + "bid must be >= 0");
        if (q.bid > q.ask)
            throw ValidationError(at + "crossed quote: bid > ask");
        if (q.bid == 0.0 && q.ask == 0.0) {
            qs.warnings.push_back(at + "bid = ask = 0, quote dropped");
            continue;
        }
        auto [it, inserted] = by_maturity[q.maturity].emplace(q.strike, q);
        if (!inserted)
            throw ValidationError(at + "duplicate (maturity, strike) quote");
    }

    for (auto& [t, strikes] : by_maturity) {
        QuoteSlice slice;
        slice.maturity = t;
        slice.spot = qs.spot;
        slice.lambda = lambda;
        for (auto& [k, q] : strikes) slice.quotes.push_back(q);
        qs.slices.push_back(std::move(slice));
    }
    return qs;
}

// Penalty weights per §-of-configuration: omega = lambda * (ask - bid) for a
// genuine spread; a zero spread would destroy strict convexity of the penalty,
// so it is floored at lambda * eps_floor * spot.  lambda must be positive.
[[nodiscard]] inline WeightedSlice compute_weights(const QuoteSlice& slice,
                                                   double eps_floor = 1e-4) {
    if (!(slice.lambda > 0.0))
        throw ValidationError(
            "compute_weights: lambda must be > 0 (penalty strict convexity)");
    if (!(eps_floor > 0.0))
        throw ValidationError("compute_weights: eps_floor must be > 0");
    for (std::size_t j = 1; j < slice.quotes.size(); ++j)
        if (!(slice.quotes[j - 1].strike < slice.quotes[j].strike))
            throw ValidationError(
                "compute_weights: strikes must be strictly increasing");

    WeightedSlice ws;
    ws.slice = slice;
    ws.mid.reserve(slice.quotes.size());
    ws.omega.reserve(slice.quotes.size());
    ws.delta_bid.reserve(slice.quotes.size());
    ws.delta_ask.reserve(slice.quotes.size());
    for (const Quote& q : slice.quotes) {
        const double mid = 0.5 * (q.bid + q.ask);
        ws.mid.push_back(mid);
        ws.omega.push_back(q.ask > q.bid
                               ? slice.lambda * (q.ask - q.bid)
                               : slice.lambda * eps_floor * slice.spot);
        ws.delta_bid.push_back(q.bid - mid);
        ws.delta_ask.push_back(q.ask - mid);
    }
    return ws;
}

[[nodiscard]] inline std::vector<WeightedSlice> compute_all_weights(
    const QuoteSet& qs, double eps_floor = 1e-4) {
    std::vector<WeightedSlice> out;
    out.reserve(qs.slices.size());
    for (const QuoteSlice& s : qs.slices) out.push_back(compute_weights(s, eps_floor));
    return out;
}

}  // namespace volcal
