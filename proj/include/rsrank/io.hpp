#pragma once

// File formats: classic Preflib SOC/SOI ballots, JSON parameter documents,
// CSV result tables and the Cayley-graph export (DOT plus a CSV node table).

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rsrank/core.hpp"
#include "rsrank/models.hpp"

namespace rsrank {

// ---------------------------------------------------------------------------
// Text helpers

/// Shortest decimal representation that round-trips; locale independent.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path + "'");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

[[noreturn]] inline void parse_error(std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::parse, msg + " at line " + std::to_string(line));
}

inline long long parse_int(std::string_view s, std::size_t line) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    parse_error(line, "expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Preflib

struct PreflibFile {
  int n = 0;
  std::vector<std::string> alternative_names;
  long long num_voters = 0;
  long long sum_of_counts = 0;
  long long num_unique_orders = 0;
  std::vector<std::pair<long long, std::vector<Item>>> order_lines;  // 0-based
};

/// Parses the classic Preflib layout: n; n lines "index,name"; a line
/// "voters,sum_of_counts,unique_orders"; then "count,c1,c2,..." lines with
/// 1-based candidate ids. '#' lines are comments. Ties are rejected.
inline PreflibFile parse_preflib_file(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> lines;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++lineno;
    const auto line = detail::trim(text.substr(start, end - start));
    if (!line.empty() && line.front() != '#') lines.emplace_back(lineno, line);
    start = end + 1;
  }
  if (lines.empty()) throw Error(ErrorKind::parse, "empty Preflib file");

  PreflibFile f;
  std::size_t cursor = 0;
  {
    const auto [ln, line] = lines[cursor++];
    const auto n = detail::parse_int(line, ln);
    if (n < 2) detail::parse_error(ln, "candidate count must be >= 2");
    f.n = static_cast<int>(n);
  }
  if (lines.size() < cursor + static_cast<std::size_t>(f.n) + 1) {
    throw Error(ErrorKind::parse, "truncated Preflib header");
  }
  for (int i = 0; i < f.n; ++i) {
    const auto [ln, line] = lines[cursor++];
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) detail::parse_error(ln, "malformed candidate line");
    const auto idx = detail::parse_int(detail::trim(line.substr(0, comma)), ln);
    if (idx != i + 1) detail::parse_error(ln, "candidate indices must run 1..n in order");
    f.alternative_names.emplace_back(detail::trim(line.substr(comma + 1)));
  }
  {
    const auto [ln, line] = lines[cursor++];
    const auto parts = detail::split(line, ',');
    if (parts.size() != 3) detail::parse_error(ln, "malformed voter-count header");
    f.num_voters = detail::parse_int(parts[0], ln);
    f.sum_of_counts = detail::parse_int(parts[1], ln);
    f.num_unique_orders = detail::parse_int(parts[2], ln);
  }
  long long counted = 0;
  for (; cursor < lines.size(); ++cursor) {
    const auto [ln, line] = lines[cursor];
    if (line.find('{') != std::string_view::npos || line.find('}') != std::string_view::npos) {
      detail::parse_error(ln, "ties are not supported");
    }
    const auto parts = detail::split(line, ',');
    if (parts.size() < 2) detail::parse_error(ln, "order line has no candidates");
    const auto count = detail::parse_int(parts[0], ln);
    if (count < 1) detail::parse_error(ln, "order count must be positive");
    std::vector<Item> order;
    std::vector<bool> seen(static_cast<std::size_t>(f.n), false);
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const auto id = detail::parse_int(parts[i], ln);
      if (id < 1 || id > f.n) detail::parse_error(ln, "candidate id out of range");
      if (seen[id - 1]) detail::parse_error(ln, "duplicate item");
      seen[id - 1] = true;
      order.push_back(static_cast<Item>(id - 1));
    }
    counted += count;
    f.order_lines.emplace_back(count, std::move(order));
  }
  if (counted != f.sum_of_counts) {
    throw Error(ErrorKind::parse, "order counts sum to " + std::to_string(counted) +
                                      " but the header says " +
                                      std::to_string(f.sum_of_counts));
  }
  if (static_cast<long long>(f.order_lines.size()) != f.num_unique_orders) {
    throw Error(ErrorKind::parse, "found " + std::to_string(f.order_lines.size()) +
                                      " order lines but the header says " +
                                      std::to_string(f.num_unique_orders));
  }
  return f;
}

inline RankingDataset parse_preflib(std::string_view text) {
  const auto f = parse_preflib_file(text);
  RankingDataset ds{Universe(f.n, f.alternative_names), {}};
  for (const auto& [count, order] : f.order_lines) {
    ds.rankings.push_back(Ranking{order, count});
  }
  return ds;
}

inline RankingDataset read_preflib(const std::string& path) {
  return parse_preflib(read_file(path));
}

/// Serializes a dataset in the classic layout (the inverse of parse_preflib).
inline std::string write_preflib(const RankingDataset& ds) {
  std::ostringstream out;
  const int n = ds.universe.n;
  out << n << '\n';
  for (int i = 0; i < n; ++i) {
    out << i + 1 << ','
        << (ds.universe.labels.empty() ? "item " + std::to_string(i + 1)
                                       : ds.universe.labels[i])
        << '\n';
  }
  const auto total = ds.total_weight();
  out << total << ',' << total << ',' << ds.rankings.size() << '\n';
  for (const auto& r : ds.rankings) {
    out << r.weight;
    for (Item x : r.items) out << ',' << x + 1;
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Parameter documents
//
// {"format": "rsrank-params", "version": 1, "model_kind": "pl" | "crs-full" |
//  "crs-factor" | "mallows", "n": int, "rank": int | null, plus
//  pl: "theta": [n]; crs-full: "u": [n(n-1)] (row-major over ordered pairs,
//  diagonal removed); crs-factor: "T", "C": [n][rank];
//  mallows: "sigma0": [n] (item at each position), "theta_c": number}

inline constexpr int kParamsVersion = 1;

inline nlohmann::json params_to_json(const ModelParams& params) {
  using nlohmann::json;
  json doc;
  doc["format"] = "rsrank-params";
  doc["version"] = kParamsVersion;
  doc["model_kind"] = std::string(to_string(kind_of(params)));
  doc["n"] = universe_size(params);
  doc["rank"] = nullptr;
  auto rows = [](const Matrix& m) {
    json out = json::array();
    for (std::size_t i = 0; i < m.rows; ++i) {
      out.push_back(std::vector<double>(m.row(i), m.row(i) + m.cols));
    }
    return out;
  };
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PlParams>) {
          doc["theta"] = m.theta;
        } else if constexpr (std::is_same_v<T, CrsFullParams>) {
          doc["u"] = m.u;
        } else if constexpr (std::is_same_v<T, CrsFactorParams>) {
          doc["rank"] = m.rank();
          doc["T"] = rows(m.target);
          doc["C"] = rows(m.context);
        } else {
          doc["sigma0"] = m.reference;
          doc["theta_c"] = m.concentration;
        }
      },
      params);
  return doc;
}

inline ModelParams params_from_json(const nlohmann::json& doc) {
  auto fail = [](const std::string& msg) -> void {
    throw Error(ErrorKind::parse, "parameter document: " + msg);
  };
  try {
    if (doc.value("format", std::string{}) != "rsrank-params") fail("unknown format");
    if (doc.at("version").get<int>() != kParamsVersion) {
      fail("unsupported version " + doc.at("version").dump());
    }
    const auto kind = parse_model_kind(doc.at("model_kind").get<std::string>());
    const int n = doc.at("n").get<int>();
    if (n < 2) fail("n must be >= 2");
    auto dims = [&](std::size_t got, std::size_t want, const char* key) {
      if (got != want) {
        throw Error(ErrorKind::invalid_params,
                    std::string("parameter document: '") + key + "' has " +
                        std::to_string(got) + " entries, expected " +
                        std::to_string(want));
      }
    };
    switch (kind) {
      case ModelKind::pl: {
        auto theta = doc.at("theta").get<std::vector<double>>();
        dims(theta.size(), static_cast<std::size_t>(n), "theta");
        return PlParams{std::move(theta)};
      }
      case ModelKind::crs_full: {
        auto u = doc.at("u").get<std::vector<double>>();
        dims(u.size(), static_cast<std::size_t>(n) * (n - 1), "u");
        return CrsFullParams{n, std::move(u)};
      }
      case ModelKind::crs_factor: {
        const int r = doc.at("rank").get<int>();
        if (r < 1) fail("rank must be >= 1");
        auto read = [&](const char* key) {
          const auto rows = doc.at(key).get<std::vector<std::vector<double>>>();
          dims(rows.size(), static_cast<std::size_t>(n), key);
          Matrix m(static_cast<std::size_t>(n), static_cast<std::size_t>(r));
          for (std::size_t i = 0; i < rows.size(); ++i) {
            dims(rows[i].size(), static_cast<std::size_t>(r), key);
            std::copy(rows[i].begin(), rows[i].end(), m.row(i));
          }
          return m;
        };
        return CrsFactorParams{read("T"), read("C")};
      }
      case ModelKind::mallows: {
        MallowsParams m{doc.at("sigma0").get<std::vector<Item>>(),
                        doc.at("theta_c").get<double>()};
        dims(m.reference.size(), static_cast<std::size_t>(n), "sigma0");
        check_params(m);
        return m;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("parameter document: ") + e.what());
  }
  throw Error(ErrorKind::parse, "parameter document: unreachable");
}

inline void write_params(const ModelParams& params, const std::string& path) {
  write_file(path, params_to_json(params).dump(2) + "\n");
}

inline ModelParams read_params(const std::string& path) {
  const auto text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, "parameter document: " + std::string(e.what()));
  }
  return params_from_json(doc);
}

// ---------------------------------------------------------------------------
// CSV

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != header.size()) {
      throw Error(ErrorKind::invalid_argument, "row width does not match header");
    }
    rows.push_back(std::move(row));
  }
};

namespace detail {

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string cell_text(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(v);
        else if constexpr (std::is_same_v<T, double>) return format_double(v);
        else return csv_field(v);
      },
      c);
}

}  // namespace detail

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i) out += ',';
    out += detail::csv_field(t.header[i]);
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += detail::cell_text(row[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_results_csv(const Table& t, const std::string& path) {
  write_file(path, to_csv(t));
}

// ---------------------------------------------------------------------------
// Cayley graph of S_n under adjacent transpositions

inline constexpr int kMaxCayleyN = 6;

struct TaggedParams {
  std::string tag;  // attribute becomes p_<tag>
  ModelParams params;
};

struct CayleyGraph {
  std::vector<std::vector<Item>> nodes;  // lexicographic order
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::string> tags;
  std::vector<std::vector<double>> probabilities;  // [model][node]
};

inline std::string permutation_id(const std::vector<Item>& p) {
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) s += '|';
    s += std::to_string(p[i]);
  }
  return s;
}

inline CayleyGraph cayley_graph(const std::vector<TaggedParams>& models, int n) {
  if (n > kMaxCayleyN) {
    throw Error(ErrorKind::too_large, "cayley export supports n <= 6");
  }
  const Universe universe(n);
  CayleyGraph g;
  std::vector<Item> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Item{0});
  do {
    g.nodes.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (std::size_t a = 0; a < g.nodes.size(); ++a) {
    for (int i = 0; i + 1 < n; ++i) {
      auto swapped = g.nodes[a];
      std::swap(swapped[i], swapped[i + 1]);
      if (g.nodes[a] < swapped) {
        const auto b = static_cast<std::size_t>(
            std::lower_bound(g.nodes.begin(), g.nodes.end(), swapped) - g.nodes.begin());
        g.edges.emplace_back(a, b);
      }
    }
  }
  for (const auto& m : models) {
    if (universe_size(m.params) != n) {
      throw Error(ErrorKind::invalid_params,
                  "model '" + m.tag + "' is not defined on n=" + std::to_string(n));
    }
    const auto pmf = enumerate_pmf(m.params, universe);
    std::vector<double> probs;
    for (const auto& entry : pmf) probs.push_back(entry.second);
    g.tags.push_back(m.tag);
    g.probabilities.push_back(std::move(probs));
  }
  return g;
}

inline std::string cayley_dot(const CayleyGraph& g) {
  std::string out = "graph cayley {\n";
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    out += "  \"" + permutation_id(g.nodes[v]) + "\"";
    if (!g.tags.empty()) {
      out += " [";
      for (std::size_t m = 0; m < g.tags.size(); ++m) {
        if (m) out += ", ";
        out += "p_" + g.tags[m] + "=" + format_double(g.probabilities[m][v]);
      }
      out += "]";
    }
    out += ";\n";
  }
  for (const auto& [a, b] : g.edges) {
    out += "  \"" + permutation_id(g.nodes[a]) + "\" -- \"" +
           permutation_id(g.nodes[b]) + "\";\n";
  }
  out += "}\n";
  return out;
}

inline Table cayley_node_table(const CayleyGraph& g) {
  Table t;
  t.header.push_back("node");
  for (const auto& tag : g.tags) t.header.push_back("p_" + tag);
  for (std::size_t v = 0; v < g.nodes.size(); ++v) {
    std::vector<Cell> row{permutation_id(g.nodes[v])};
    for (const auto& probs : g.probabilities) row.emplace_back(probs[v]);
    t.add(std::move(row));
  }
  return t;
}

/// Writes the DOT graph to `path` and the node table to `path` + ".csv".
inline CayleyGraph export_cayley(const std::vector<TaggedParams>& models, int n,
                                 const std::string& path) {
  auto g = cayley_graph(models, n);
  write_file(path, cayley_dot(g));
  write_results_csv(cayley_node_table(g), path + ".csv");
  return g;
}

}  // namespace rsrank
