#pragma once

#include <fstream>
#include <sstream>

#include "voltcoal/grid.hpp"

namespace voltcoal {

// ---------------------------------------------------------------------------
// Network file format
//
//   # comment
//   [base] v_volts=230 s_kva=1000
//   [bus]  id=1 kind=slack
//   [bus]  id=2 kind=load kw=10.0 kvar=2.0 pv_kw=5.0 inv_kvar=0.0
//   [line] from=1 to=2 r_ohm=0.02 x_ohm=0.01
//
// One record per line: a [tag] followed by key=value tokens separated by
// whitespace.  Record order is irrelevant; unknown tags or keys reject the
// file.  Omitted numeric keys default to zero ([bus]) or are required
// ([line] from/to and at least one of r_ohm/x_ohm).
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::pair<std::string, std::string>> parse_kv_tokens(
    std::string_view rest, int lineno) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream iss{std::string(rest)};
  std::string tok;
  while (iss >> tok) {
    size_t eq = tok.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 > tok.size())
      throw Error(strfmt("line %d: expected key=value, got '%s'", lineno, tok.c_str()));
    kv.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return kv;
}

}  // namespace detail

inline NetworkModel load_network(std::istream& in, const char* origin = "network") {
  NetworkModel net;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] != '[')
      throw Error(strfmt("%s line %d: expected [tag] record", origin, lineno));
    size_t close = line.find(']');
    if (close == std::string_view::npos)
      throw Error(strfmt("%s line %d: unterminated [tag]", origin, lineno));
    std::string tag(line.substr(1, close - 1));
    auto kv = detail::parse_kv_tokens(line.substr(close + 1), lineno);

    if (tag == "base") {
      for (auto& [k, v] : kv) {
        if (k == "v_volts") net.v_base = parse_double(v, "v_volts");
        else if (k == "s_kva") net.s_base_kva = parse_double(v, "s_kva");
        else throw Error(strfmt("%s line %d: unknown [base] key '%s'", origin, lineno, k.c_str()));
      }
      if (!(net.v_base > 0.0) || !(net.s_base_kva > 0.0))
        throw Error(strfmt("%s line %d: bases must be positive", origin, lineno));
    } else if (tag == "bus") {
      Bus b;
      bool have_id = false;
      for (auto& [k, v] : kv) {
        if (k == "id") { b.id = static_cast<int>(parse_long(v, "bus id")); have_id = true; }
        else if (k == "kind") {
          if (v == "slack") b.kind = BusKind::slack;
          else if (v == "load") b.kind = BusKind::load;
          else throw Error(strfmt("%s line %d: unknown bus kind '%s'", origin, lineno, v.c_str()));
        }
        else if (k == "kw") b.load_p_kw = parse_double(v, "kw");
        else if (k == "kvar") b.load_q_kvar = parse_double(v, "kvar");
        else if (k == "pv_kw") b.pv_p_kw = parse_double(v, "pv_kw");
        else if (k == "inv_kvar") b.inv_q_kvar = parse_double(v, "inv_kvar");
        else throw Error(strfmt("%s line %d: unknown [bus] key '%s'", origin, lineno, k.c_str()));
      }
      if (!have_id) throw Error(strfmt("%s line %d: [bus] requires id", origin, lineno));
      net.buses.push_back(b);
    } else if (tag == "line") {
      Line ln;
      bool have_from = false, have_to = false;
      for (auto& [k, v] : kv) {
        if (k == "from") { ln.from = static_cast<int>(parse_long(v, "from")); have_from = true; }
        else if (k == "to") { ln.to = static_cast<int>(parse_long(v, "to")); have_to = true; }
        else if (k == "r_ohm") ln.r_ohm = parse_double(v, "r_ohm");
        else if (k == "x_ohm") ln.x_ohm = parse_double(v, "x_ohm");
        else throw Error(strfmt("%s line %d: unknown [line] key '%s'", origin, lineno, k.c_str()));
      }
      if (!have_from || !have_to)
        throw Error(strfmt("%s line %d: [line] requires from and to", origin, lineno));
      net.lines.push_back(ln);
    } else {
      throw Error(strfmt("%s line %d: unknown record tag [%s]", origin, lineno, tag.c_str()));
    }
  }
  FeederTree validate(net);  // throws on structural problems
  return net;
}

inline NetworkModel load_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(strfmt("cannot open network file '%s'", path.c_str()));
  return load_network(in, path.c_str());
}

inline void save_network(const NetworkModel& net, std::ostream& out) {
  out << "# radial feeder model\n";
  out << strfmt("[base] v_volts=%.6g s_kva=%.6g\n", net.v_base, net.s_base_kva);
  for (const Bus& b : net.buses) {
    out << strfmt("[bus] id=%d kind=%s", b.id, b.kind == BusKind::slack ? "slack" : "load");
    if (b.load_p_kw != 0.0) out << strfmt(" kw=%.6g", b.load_p_kw);
    if (b.load_q_kvar != 0.0) out << strfmt(" kvar=%.6g", b.load_q_kvar);
    if (b.pv_p_kw != 0.0) out << strfmt(" pv_kw=%.6g", b.pv_p_kw);
    if (b.inv_q_kvar != 0.0) out << strfmt(" inv_kvar=%.6g", b.inv_q_kvar);
    out << "\n";
  }
  for (const Line& ln : net.lines)
    out << strfmt("[line] from=%d to=%d r_ohm=%.8g x_ohm=%.8g\n", ln.from, ln.to, ln.r_ohm, ln.x_ohm);
}

inline void save_network_file(const NetworkModel& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(strfmt("cannot write network file '%s'", path.c_str()));
  save_network(net, out);
}

}  // namespace voltcoal
