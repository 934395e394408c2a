#include "balancekit/regularizer.hpp"

#include "balancekit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace balancekit {

CostSpec::CostSpec(std::vector<PowerTerm> terms) : terms_(std::move(terms)) {
    if (terms_.empty()) throw InvalidArgument("cost needs at least one term");
    for (const PowerTerm& t : terms_) {
        if (!(t.p > 0.0) || !std::isfinite(t.p)) {
            throw InvalidArgument(fmt::format("cost exponent must be > 0, got {}", t.p));
        }
        if (!(t.beta > 0.0) || !std::isfinite(t.beta)) {
            throw InvalidArgument(fmt::format("cost coefficient must be > 0, got {}", t.beta));
        }
    }
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

CostSpec CostSpec::parse(std::string_view text) {
    std::vector<PowerTerm> terms;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t plus = text.find('+', start);
        if (plus == std::string_view::npos) plus = text.size();
        // A '+' directly after 'e'/'E' inside a number is an exponent sign.
        while (plus < text.size() && plus > start &&
               (text[plus - 1] == 'e' || text[plus - 1] == 'E') && plus >= 2 &&
               std::isdigit(static_cast<unsigned char>(text[plus - 2]))) {
            plus = text.find('+', plus + 1);
            if (plus == std::string_view::npos) plus = text.size();
        }
        const std::string_view token = trim(text.substr(start, plus - start));
        const auto bad = [&](const char* why) {
            return ParseError(fmt::format("bad cost token '{}': {}", token, why), start);
        };

        PowerTerm term;
        std::string_view body = token;
        if (const auto star = token.find('*'); star != std::string_view::npos) {
            if (!parse_double(token.substr(0, star), term.beta)) throw bad("invalid coefficient");
            body = trim(token.substr(star + 1));
        }
        std::string lower(body);
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        if (lower == "l1") {
            term.p = 1.0;
        } else if (lower == "l2") {
            term.p = 2.0;
        } else if (lower.rfind("lp:", 0) == 0) {
            if (!parse_double(std::string_view(lower).substr(3), term.p)) throw bad("invalid exponent");
        } else {
            throw bad("expected l1, l2 or lp:<p>");
        }
        if (!(term.p > 0.0) || !std::isfinite(term.p)) throw bad("exponent must be > 0");
        if (!(term.beta > 0.0) || !std::isfinite(term.beta)) throw bad("coefficient must be > 0");
        terms.push_back(term);
        start = plus + 1;
    }
    return CostSpec(std::move(terms));
}

double CostSpec::min_p() const noexcept {
    double m = terms_.front().p;
    for (const PowerTerm& t : terms_) m = std::min(m, t.p);
    return m;
}

std::string CostSpec::to_string() const {
    std::string out;
    for (const PowerTerm& t : terms_) {
        if (!out.empty()) out += '+';
        out += fmt::format("{}*", t.beta);
        if (t.p == 1.0) {
            out += "l1";
        } else if (t.p == 2.0) {
            out += "l2";
        } else {
            out += fmt::format("lp:{}", t.p);
        }
    }
    return out;
}

double weight_cost(const CostSpec& spec, double w) {
    const double a = std::fabs(w);
    if (a == 0.0) return 0.0;
    double s = 0.0;
    for (const PowerTerm& t : spec.terms()) s += t.beta * std::pow(a, t.p);
    return s;
}

double cost_derivative(const CostSpec& spec, double w) {
    if (w == 0.0) {
        if (spec.min_p() <= 1.0) {
            throw InvalidArgument("cost derivative is undefined at w = 0 for p <= 1");
        }
        return 0.0;
    }
    const double a = std::fabs(w);
    const double sign = w > 0.0 ? 1.0 : -1.0;
    double s = 0.0;
    for (const PowerTerm& t : spec.terms()) s += t.beta * t.p * std::pow(a, t.p - 1.0);
    return sign * s;
}

double network_cost(const Network& net, const CostSpec& spec) {
    double s = 0.0;
    for (const Edge& e : net.edges()) s += weight_cost(spec, e.weight);
    return s;
}

}  // namespace balancekit
