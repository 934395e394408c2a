#include "balancekit/network_io.hpp"

#include "balancekit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace balancekit {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) throw ParseError(fmt::format("{}: expected an object", where), 0);
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ParseError(fmt::format("{}: missing field '{}'", where, key), 0);
    }
    return *it;
}

double number(const json& obj, const char* key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_number()) throw ParseError(fmt::format("{}: field '{}' must be a number", where, key), 0);
    return v.get<double>();
}

Role role_from_string(const std::string& s, const std::string& where) {
    if (s == "input") return Role::Input;
    if (s == "output") return Role::Output;
    if (s == "hidden") return Role::Hidden;
    if (s == "bias") return Role::BiasSource;
    throw ParseError(fmt::format("{}: unknown role '{}'", where, s), 0);
}

}  // namespace

json activation_to_json(const ActivationSpec& spec) {
    switch (spec.kind()) {
        case ActivationKind::BiLU:
            return {{"kind", "bilu"}, {"a", spec.a()}, {"b", spec.b()}};
        case ActivationKind::BiPU:
            return {{"kind", "bipu"}, {"C", spec.C()}, {"D", spec.D()}, {"c", spec.c()}};
        case ActivationKind::Tanh:
            return {{"kind", "tanh"}};
        case ActivationKind::Logistic:
            return {{"kind", "logistic"}};
    }
    return {};
}

ActivationSpec activation_from_json(const json& doc) {
    const std::string where = "activation";
    const json& kind = require(doc, "kind", where);
    if (!kind.is_string()) throw ParseError("activation: 'kind' must be a string", 0);
    const auto k = kind.get<std::string>();
    try {
        if (k == "bilu") return ActivationSpec::bilu(number(doc, "a", where), number(doc, "b", where));
        if (k == "bipu") {
            return ActivationSpec::bipu(number(doc, "C", where), number(doc, "D", where),
                                        number(doc, "c", where));
        }
    } catch (const InvalidArgument& e) {
        throw ParseError(fmt::format("activation: {}", e.what()), 0);
    }
    if (k == "tanh") return ActivationSpec::tanh();
    if (k == "logistic") return ActivationSpec::logistic();
    throw ParseError(fmt::format("activation: unknown kind '{}'", k), 0);
}

json network_to_json(const Network& net) {
    json units = json::array();
    for (const Unit& u : net.units()) {
        units.push_back({{"id", u.id},
                         {"role", to_string(u.role)},
                         {"activation", activation_to_json(u.activation)}});
    }
    json edges = json::array();
    for (const Edge& e : net.edges()) {
        edges.push_back({{"from", e.from}, {"to", e.to}, {"weight", e.weight}});
    }
    return {{"version", kNetworkDocumentVersion},
            {"recurrent", net.recurrent()},
            {"unroll_steps", net.unroll_steps()},
            {"units", std::move(units)},
            {"edges", std::move(edges)}};
}

Network network_from_json(const json& doc) {
    const std::string top = "network";
    const json& version = require(doc, "version", top);
    if (!version.is_number_integer() || version.get<int>() != kNetworkDocumentVersion) {
        throw ParseError(fmt::format("network: unsupported version {}", version.dump()), 0);
    }
    bool recurrent = false;
    int unroll = 3;
    if (auto it = doc.find("recurrent"); it != doc.end()) recurrent = it->get<bool>();
    if (auto it = doc.find("unroll_steps"); it != doc.end()) unroll = it->get<int>();

    std::vector<Unit> units;
    const json& junits = require(doc, "units", top);
    if (!junits.is_array()) throw ParseError("network: 'units' must be an array", 0);
    for (std::size_t k = 0; k < junits.size(); ++k) {
        const json& ju = junits[k];
        const std::string where = fmt::format("units[{}]", k);
        const json& id = require(ju, "id", where);
        if (!id.is_number_unsigned()) throw ParseError(where + ": 'id' must be a non-negative integer", 0);
        const std::string uwhere = fmt::format("unit {}", id.get<UnitId>());
        Unit u;
        u.id = id.get<UnitId>();
        u.role = role_from_string(require(ju, "role", uwhere).get<std::string>(), uwhere);
        try {
            u.activation = activation_from_json(require(ju, "activation", uwhere));
        } catch (const ParseError& e) {
            throw ParseError(fmt::format("{}: {}", uwhere, e.what()), 0);
        }
        units.push_back(u);
    }
    std::sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) { return a.id < b.id; });

    std::vector<Edge> edges;
    const json& jedges = require(doc, "edges", top);
    if (!jedges.is_array()) throw ParseError("network: 'edges' must be an array", 0);
    for (std::size_t k = 0; k < jedges.size(); ++k) {
        const json& je = jedges[k];
        const std::string where = fmt::format("edges[{}]", k);
        Edge e;
        e.from = require(je, "from", where).get<UnitId>();
        e.to = require(je, "to", where).get<UnitId>();
        e.weight = number(je, "weight", where);
        edges.push_back(e);
    }
    try {
        return Network(std::move(units), std::move(edges), recurrent, unroll);
    } catch (const InvalidNetwork& e) {
        throw ParseError(e.what(), 0);
    }
}

std::string serialize(const Network& net) { return network_to_json(net).dump(2); }

Network deserialize(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(fmt::format("malformed network document: {}", e.what()), e.byte);
    }
    try {
        return network_from_json(doc);
    } catch (const json::exception& e) {
        throw ParseError(fmt::format("malformed network document: {}", e.what()), 0);
    }
}

Network load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot open network file '{}'", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str());
}

void save_network(const Network& net, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(fmt::format("cannot write network file '{}'", path.string()));
    out << serialize(net) << '\n';
}

}  // namespace balancekit
