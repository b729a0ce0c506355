/*
 * Copyright 2026 The ssmtl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ssmtl/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ssmtl/errors.hpp"

namespace ssmtl {

namespace {

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Calls `fn(line_number, tokens)` for every non-blank, non-comment line.
template <typename Fn>
void for_each_record(std::string_view text, Fn &&fn) {
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    auto tokens = tokenize(line);
    if (!tokens.empty() && tokens[0].front() != '#') fn(line_no, tokens);
    if (end == text.size()) break;
    pos = end + 1;
  }
}

std::string where(std::string_view source, size_t line_no) {
  return std::string(source) + ":" + std::to_string(line_no);
}

}  // namespace

GraphStore GraphStore::build(Matrix features, std::span<const Edge> edges) {
  if (!features.all_finite()) {
    for (size_t r = 0; r < features.rows; ++r) {
      for (double v : features.row(r)) {
        if (!std::isfinite(v)) {
          throw ValidationError("feature row " + std::to_string(r) + " contains a non-finite value");
        }
      }
    }
  }
  const size_t n = features.rows;
  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (const Edge &e : edges) {
    if (e.u >= n || e.v >= n) {
      throw ValidationError("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                            ") references a node outside [0, " + std::to_string(n) + ")");
    }
    if (e.u == e.v) continue;
    directed.push_back({e.u, e.v});
    directed.push_back({e.v, e.u});
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  GraphStore g;
  g.features_ = std::move(features);
  g.offsets_.assign(n + 1, 0);
  g.targets_.reserve(directed.size());
  for (const Edge &e : directed) {
    ++g.offsets_[e.u + 1];
    g.targets_.push_back(e.v);
  }
  for (size_t i = 0; i < n; ++i) g.offsets_[i + 1] += g.offsets_[i];
  return g;
}

bool GraphStore::has_edge(NodeId a, NodeId b) const {
  if (a >= num_nodes() || b >= num_nodes()) return false;
  auto nb = neighbors(a);
  return std::binary_search(nb.begin(), nb.end(), b);
}

std::vector<Edge> GraphStore::edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (NodeId u = 0; u < num_nodes(); ++u) {
    for (NodeId v : neighbors(u)) {
      if (u < v) out.push_back({u, v});
    }
  }
  return out;
}

uint64_t GraphStore::fingerprint() const {
  // FNV-1a over the raw representation.
  uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void *p, size_t len) {
    const auto *bytes = static_cast<const unsigned char *>(p);
    for (size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const uint64_t dims[2] = {features_.rows, features_.cols};
  feed(dims, sizeof(dims));
  feed(features_.data.data(), features_.data.size() * sizeof(double));
  for (size_t o : offsets_) {
    const uint64_t v = o;
    feed(&v, sizeof(v));
  }
  feed(targets_.data(), targets_.size() * sizeof(NodeId));
  return h;
}

std::vector<Edge> parse_edge_list(std::string_view text, std::string_view source) {
  std::vector<Edge> edges;
  for_each_record(text, [&](size_t line_no, const std::vector<std::string_view> &tok) {
    if (tok.size() != 2) {
      throw ParseError(where(source, line_no) + ": expected 2 node ids, found " +
                       std::to_string(tok.size()) + " tokens");
    }
    NodeId ids[2];
    for (int k = 0; k < 2; ++k) {
      uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(tok[k].data(), tok[k].data() + tok[k].size(), v);
      if (ec != std::errc() || ptr != tok[k].data() + tok[k].size()) {
        throw ParseError(where(source, line_no) + ": invalid node id '" + std::string(tok[k]) + "'");
      }
      if (v > UINT32_MAX) {
        throw ValidationError(where(source, line_no) + ": node id " + std::string(tok[k]) +
                              " exceeds the 32-bit id space");
      }
      ids[k] = static_cast<NodeId>(v);
    }
    edges.push_back({ids[0], ids[1]});
  });
  return edges;
}

Matrix parse_feature_rows(std::string_view text, std::string_view source) {
  Matrix m;
  size_t row = 0;
  for_each_record(text, [&](size_t line_no, const std::vector<std::string_view> &tok) {
    if (row == 0) {
      m.cols = tok.size();
    } else if (tok.size() != m.cols) {
      throw ParseError(where(source, line_no) + ": feature row " + std::to_string(row) + " has " +
                       std::to_string(tok.size()) + " values, expected " + std::to_string(m.cols));
    }
    for (auto t : tok) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || ptr != t.data() + t.size()) {
        throw ParseError(where(source, line_no) + ": feature row " + std::to_string(row) +
                         ": invalid number '" + std::string(t) + "'");
      }
      if (!std::isfinite(v)) {
        throw ValidationError(where(source, line_no) + ": feature row " + std::to_string(row) +
                              " contains a non-finite value");
      }
      m.data.push_back(v);
    }
    ++row;
  });
  m.rows = row;
  return m;
}

GraphStore load_graph(const std::filesystem::path &edge_list_path,
                      const std::filesystem::path &features_path) {
  Matrix features = parse_feature_rows(read_file(features_path), features_path.string());
  std::vector<Edge> edges = parse_edge_list(read_file(edge_list_path), edge_list_path.string());
  return GraphStore::build(std::move(features), edges);
}

void save_graph(const GraphStore &graph, const std::filesystem::path &edge_list_path,
                const std::filesystem::path &features_path) {
  {
    std::ofstream out(edge_list_path);
    if (!out) throw IoError("cannot write " + edge_list_path.string());
    for (const Edge &e : graph.edges()) out << e.u << ' ' << e.v << '\n';
    if (!out) throw IoError("write failed: " + edge_list_path.string());
  }
  std::ofstream out(features_path);
  if (!out) throw IoError("cannot write " + features_path.string());
  char buf[32];
  const Matrix &f = graph.features();
  for (size_t r = 0; r < f.rows; ++r) {
    for (size_t j = 0; j < f.cols; ++j) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), f(r, j));
      (void)ec;
      if (j) out << ' ';
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + features_path.string());
}

}  // namespace ssmtl
