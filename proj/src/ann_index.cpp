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

#include "ssmtl/ann_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <queue>

#include "ssmtl/errors.hpp"
#include "ssmtl/random.hpp"

namespace ssmtl {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'M', 'T', 'L', 'A', 'N', 'N'};
constexpr uint32_t kFormatVersion = 1;

// Strict "better than" over (score desc, id asc).
template <typename C>
bool better(const C &a, const C &b) {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

class Writer {
 public:
  explicit Writer(std::ofstream &out) : out_(out) {}
  template <typename T>
  void put(const T &v) {
    out_.write(reinterpret_cast<const char *>(&v), sizeof(T));
  }
  template <typename T>
  void put_vec(const std::vector<T> &v) {
    put<uint64_t>(v.size());
    out_.write(reinterpret_cast<const char *>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }

 private:
  std::ofstream &out_;
};

class Reader {
 public:
  Reader(std::ifstream &in, std::string source) : in_(in), source_(std::move(source)) {}
  template <typename T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char *>(&v), sizeof(T));
    if (!in_) throw ParseError(source_ + ": truncated index file");
    return v;
  }
  template <typename T>
  std::vector<T> get_vec(uint64_t limit) {
    const auto n = get<uint64_t>();
    if (n > limit) throw ParseError(source_ + ": corrupt length field");
    std::vector<T> v(n);
    in_.read(reinterpret_cast<char *>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in_) throw ParseError(source_ + ": truncated index file");
    return v;
  }

 private:
  std::ifstream &in_;
  std::string source_;
};

}  // namespace

void AnnConfig::validate() const {
  if (m_conn < 2) throw ValidationError("m_conn must be >= 2");
  if (ef_construction < 1) throw ValidationError("ef_construction must be >= 1");
}

AnnIndex AnnIndex::build(const EmbeddingTable &table, const AnnConfig &cfg) {
  cfg.validate();
  if (table.num_nodes() == 0) throw ValidationError("cannot index an empty embedding table");
  AnnIndex index;
  index.cfg_ = cfg;
  index.vectors_ = table.values;
  const size_t n = table.num_nodes();
  index.levels_.resize(n);
  index.links_.resize(n);
  Rng rng(cfg.seed);
  const double ml = 1.0 / std::log(static_cast<double>(cfg.m_conn));
  for (NodeId id = 0; id < n; ++id) {
    const int level = static_cast<int>(std::floor(-std::log(rng.uniform_open_zero()) * ml));
    index.insert(id, level);
  }
  index.repair_reachability();
  return index;
}

NodeId AnnIndex::greedy_descend(std::span<const double> q, NodeId ep, int level) const {
  Candidate best{score(ep, q), ep};
  bool moved = true;
  while (moved) {
    moved = false;
    for (NodeId nb : links_[best.id][level]) {
      const Candidate c{score(nb, q), nb};
      if (better(c, best)) {
        best = c;
        moved = true;
      }
    }
  }
  return best.id;
}

std::vector<AnnIndex::Candidate> AnnIndex::search_layer(std::span<const double> q, NodeId ep,
                                                        size_t ef, int level) const {
  // `frontier` pops the best candidate; `found` keeps the worst of the
  // current top-ef on top.
  auto frontier_cmp = [](const Candidate &a, const Candidate &b) { return better(b, a); };
  auto found_cmp = [](const Candidate &a, const Candidate &b) { return better(a, b); };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(frontier_cmp)> frontier(frontier_cmp);
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(found_cmp)> found(found_cmp);
  std::vector<unsigned char> visited(size(), 0);

  const Candidate start{score(ep, q), ep};
  visited[ep] = 1;
  frontier.push(start);
  found.push(start);
  while (!frontier.empty()) {
    const Candidate c = frontier.top();
    if (found.size() >= ef && better(found.top(), c)) break;
    frontier.pop();
    for (NodeId nb : links_[c.id][level]) {
      if (visited[nb]) continue;
      visited[nb] = 1;
      const Candidate cand{score(nb, q), nb};
      if (found.size() < ef || better(cand, found.top())) {
        frontier.push(cand);
        found.push(cand);
        if (found.size() > ef) found.pop();
      }
    }
  }
  std::vector<Candidate> out;
  out.reserve(found.size());
  while (!found.empty()) {
    out.push_back(found.top());
    found.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

void AnnIndex::shrink(NodeId id, int level) {
  auto &nb = links_[id][level];
  if (nb.size() <= max_degree(level)) return;
  const auto q = vectors_.row(id);
  std::vector<Candidate> scored;
  scored.reserve(nb.size());
  for (NodeId x : nb) scored.push_back({score(x, q), x});
  std::sort(scored.begin(), scored.end(), [](const Candidate &a, const Candidate &b) { return better(a, b); });
  scored.resize(max_degree(level));
  nb.clear();
  for (const auto &c : scored) nb.push_back(c.id);
}

void AnnIndex::insert(NodeId id, int level) {
  links_[id].resize(static_cast<size_t>(level) + 1);
  levels_[id] = level;
  if (max_level_ < 0) {
    entry_ = id;
    max_level_ = level;
    return;
  }
  const auto q = vectors_.row(id);
  NodeId ep = entry_;
  for (int lc = max_level_; lc > level; --lc) ep = greedy_descend(q, ep, lc);
  for (int lc = std::min(level, max_level_); lc >= 0; --lc) {
    const auto beam = search_layer(q, ep, cfg_.ef_construction, lc);
    const size_t keep = std::min(cfg_.m_conn, beam.size());
    auto &mine = links_[id][lc];
    for (size_t i = 0; i < keep; ++i) {
      const NodeId other = beam[i].id;
      mine.push_back(other);
      links_[other][lc].push_back(id);
      shrink(other, lc);
    }
    ep = beam.front().id;
  }
  if (level > max_level_) {
    entry_ = id;
    max_level_ = level;
  }
}

std::vector<unsigned char> AnnIndex::reachable_at_base() const {
  std::vector<unsigned char> seen(size(), 0);
  std::vector<NodeId> stack{entry_};
  seen[entry_] = 1;
  while (!stack.empty()) {
    const NodeId u = stack.back();
    stack.pop_back();
    for (NodeId v : links_[u][0]) {
      if (!seen[v]) {
        seen[v] = 1;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

void AnnIndex::repair_reachability() {
  auto seen = reachable_at_base();
  for (NodeId u = 0; u < size(); ++u) {
    if (seen[u]) continue;
    // Link u from the most similar reachable node that still has room.
    const auto q = vectors_.row(u);
    std::optional<Candidate> host;
    for (const auto &c : search_layer(q, entry_, cfg_.ef_construction, 0)) {
      if (seen[c.id] && links_[c.id][0].size() < max_degree(0)) {
        host = c;
        break;
      }
    }
    if (!host) {
      for (NodeId v = 0; v < size(); ++v) {
        if (!seen[v] || links_[v][0].size() >= max_degree(0)) continue;
        const Candidate c{score(v, q), v};
        if (!host || better(c, *host)) host = c;
      }
    }
    if (!host) throw ContractError("ann index: no layer-0 capacity left to repair reachability");
    links_[host->id][0].push_back(u);
    // Everything u reaches is now reachable too.
    std::vector<NodeId> stack{u};
    seen[u] = 1;
    while (!stack.empty()) {
      const NodeId x = stack.back();
      stack.pop_back();
      for (NodeId v : links_[x][0]) {
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
      }
    }
  }
}

std::vector<ScoredId> AnnIndex::search(std::span<const double> query, size_t k, size_t ef_search,
                                       std::span<const NodeId> exclude) const {
  if (ef_search < k) {
    throw ValidationError("ef_search (" + std::to_string(ef_search) + ") must be >= k (" +
                          std::to_string(k) + ")");
  }
  if (query.size() != dim()) {
    throw ShapeError("ann query dim " + std::to_string(query.size()) + " vs index dim " + std::to_string(dim()));
  }
  if (size() == 0 || k == 0) return {};
  NodeId ep = entry_;
  for (int lc = max_level_; lc > 0; --lc) ep = greedy_descend(query, ep, lc);
  std::vector<NodeId> skip(exclude.begin(), exclude.end());
  std::sort(skip.begin(), skip.end());
  std::vector<ScoredId> out;
  for (const auto &c : search_layer(query, ep, ef_search, 0)) {
    if (std::binary_search(skip.begin(), skip.end(), c.id)) continue;
    out.push_back({c.id, c.score});
    if (out.size() == k) break;
  }
  return out;
}

std::string AnnIndex::audit() const {
  for (NodeId id = 0; id < size(); ++id) {
    if (links_[id].size() != static_cast<size_t>(levels_[id]) + 1) {
      return "node " + std::to_string(id) + " has link lists for the wrong number of levels";
    }
    for (int l = 0; l <= levels_[id]; ++l) {
      if (links_[id][l].size() > max_degree(l)) {
        return "node " + std::to_string(id) + " exceeds the degree cap at level " + std::to_string(l);
      }
      for (NodeId nb : links_[id][l]) {
        if (nb >= size() || levels_[nb] < l) {
          return "node " + std::to_string(id) + " links to " + std::to_string(nb) + " at level " +
                 std::to_string(l) + " above its level";
        }
        if (nb == id) return "node " + std::to_string(id) + " links to itself";
      }
    }
  }
  if (size() > 0) {
    if (levels_[entry_] != max_level_) return "entry point is not on the top level";
    const auto seen = reachable_at_base();
    for (NodeId id = 0; id < size(); ++id) {
      if (!seen[id]) return "node " + std::to_string(id) + " is unreachable at layer 0";
    }
  }
  return {};
}

void AnnIndex::save(const std::filesystem::path &path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  Writer w(out);
  out.write(kMagic, sizeof(kMagic));
  w.put(kFormatVersion);
  w.put<uint64_t>(cfg_.m_conn);
  w.put<uint64_t>(cfg_.ef_construction);
  w.put<uint64_t>(cfg_.seed);
  w.put<uint64_t>(vectors_.rows);
  w.put<uint64_t>(vectors_.cols);
  w.put<uint32_t>(entry_);
  w.put<int32_t>(max_level_);
  out.write(reinterpret_cast<const char *>(vectors_.data.data()),
            static_cast<std::streamsize>(vectors_.data.size() * sizeof(double)));
  for (NodeId id = 0; id < size(); ++id) {
    w.put<int32_t>(levels_[id]);
    for (const auto &layer : links_[id]) w.put_vec(layer);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

AnnIndex AnnIndex::load(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path.string() + ": not an ANN index file");
  }
  Reader r(in, path.string());
  if (r.get<uint32_t>() != kFormatVersion) throw ValidationError(path.string() + ": unsupported index version");
  AnnIndex index;
  index.cfg_.m_conn = r.get<uint64_t>();
  index.cfg_.ef_construction = r.get<uint64_t>();
  index.cfg_.seed = r.get<uint64_t>();
  const auto n = r.get<uint64_t>();
  const auto d = r.get<uint64_t>();
  index.entry_ = r.get<uint32_t>();
  index.max_level_ = r.get<int32_t>();
  index.vectors_ = Matrix(n, d);
  in.read(reinterpret_cast<char *>(index.vectors_.data.data()),
          static_cast<std::streamsize>(n * d * sizeof(double)));
  if (!in) throw ParseError(path.string() + ": truncated index file");
  index.levels_.resize(n);
  index.links_.resize(n);
  for (NodeId id = 0; id < n; ++id) {
    const int level = r.get<int32_t>();
    if (level < 0 || level > 64) throw ParseError(path.string() + ": corrupt level");
    index.levels_[id] = level;
    index.links_[id].resize(static_cast<size_t>(level) + 1);
    for (auto &layer : index.links_[id]) layer = r.get_vec<NodeId>(n);
  }
  if (auto problem = index.audit(); !problem.empty()) {
    throw ValidationError(path.string() + ": " + problem);
  }
  return index;
}

}  // namespace ssmtl
