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

#include "ssmtl/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

#include "ssmtl/errors.hpp"
#include "ssmtl/random.hpp"

namespace ssmtl {

namespace {
constexpr char kMagic[8] = {'S', 'S', 'M', 'T', 'L', 'E', 'M', 'B'};
constexpr uint64_t kExportSeed = 0x5eed0e3b0de7ULL;
}  // namespace

EmbeddingTable export_embeddings(const EncoderParams &params, const GraphStore &graph, size_t k,
                                 size_t fanout, size_t num_threads) {
  if (params.input_dim() != graph.feature_dim()) {
    throw ValidationError("model input dim " + std::to_string(params.input_dim()) +
                          " != graph feature dim " + std::to_string(graph.feature_dim()));
  }
  const size_t n = graph.num_nodes();
  EmbeddingTable table{Matrix(n, params.embedding_dim())};
  auto work = [&](size_t begin, size_t end) {
    for (size_t node = begin; node < end; ++node) {
      const auto id = static_cast<NodeId>(node);
      const Subgraph sub = khop_subgraph(graph, id, k, fanout, derive_seed(kExportSeed, id));
      const Matrix z = encode(params, sub);
      std::copy(z.row(0).begin(), z.row(0).end(), table.values.row(node).begin());
    }
  };
  num_threads = std::max<size_t>(1, std::min(num_threads, n));
  if (num_threads == 1) {
    work(0, n);
    return table;
  }
  std::vector<std::thread> workers;
  const size_t chunk = (n + num_threads - 1) / num_threads;
  for (size_t t = 0; t < num_threads; ++t) {
    const size_t b = t * chunk;
    const size_t e = std::min(n, b + chunk);
    if (b < e) workers.emplace_back(work, b, e);
  }
  for (auto &w : workers) w.join();
  return table;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TopK exact_topk(const EmbeddingTable &table, std::span<const double> query, size_t k,
                std::span<const NodeId> exclude) {
  if (k < 1) throw ValidationError("exact_topk: k must be >= 1");
  if (query.size() != table.dim()) {
    throw ShapeError("exact_topk: query dim " + std::to_string(query.size()) + " vs table dim " +
                     std::to_string(table.dim()));
  }
  std::vector<NodeId> skip(exclude.begin(), exclude.end());
  std::sort(skip.begin(), skip.end());
  std::vector<ScoredId> all;
  all.reserve(table.num_nodes());
  for (NodeId id = 0; id < table.num_nodes(); ++id) {
    if (std::binary_search(skip.begin(), skip.end(), id)) continue;
    all.push_back({id, dot(table.row(id), query)});
  }
  TopK out;
  out.truncated = all.size() < k;
  const size_t take = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), ranks_before);
  all.resize(take);
  out.items = std::move(all);
  return out;
}

void save_embeddings(const EmbeddingTable &table, const std::filesystem::path &path, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  if (binary) {
    const uint64_t dims[2] = {table.num_nodes(), table.dim()};
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char *>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char *>(table.values.data.data()),
              static_cast<std::streamsize>(table.values.data.size() * sizeof(double)));
  } else {
    out << table.num_nodes() << ' ' << table.dim() << '\n';
    char buf[32];
    for (size_t r = 0; r < table.num_nodes(); ++r) {
      for (size_t j = 0; j < table.dim(); ++j) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), table.values(r, j));
        (void)ec;
        if (j) out << ' ';
        out.write(buf, ptr - buf);
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

EmbeddingTable load_embeddings(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() >= sizeof(kMagic) && std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0) {
    uint64_t dims[2];
    if (bytes.size() < sizeof(kMagic) + sizeof(dims)) throw ParseError(path.string() + ": truncated header");
    std::memcpy(dims, bytes.data() + sizeof(kMagic), sizeof(dims));
    const size_t count = dims[0] * dims[1];
    if (bytes.size() != sizeof(kMagic) + sizeof(dims) + count * sizeof(double)) {
      throw ParseError(path.string() + ": payload size does not match header");
    }
    EmbeddingTable t{Matrix(dims[0], dims[1])};
    std::memcpy(t.values.data.data(), bytes.data() + sizeof(kMagic) + sizeof(dims), count * sizeof(double));
    if (!t.values.all_finite()) throw ValidationError(path.string() + ": non-finite embedding");
    return t;
  }
  std::istringstream text(bytes);
  size_t n = 0, d = 0;
  if (!(text >> n >> d)) throw ParseError(path.string() + ":1: expected 'num_nodes dim' header");
  const std::string body = bytes.substr(std::min(bytes.size(), bytes.find('\n') + 1));
  Matrix values = parse_feature_rows(body, path.string());
  if (n == 0) values = Matrix(0, d);
  if (values.rows != n || values.cols != d) {
    throw ParseError(path.string() + ": header says " + std::to_string(n) + "x" + std::to_string(d) +
                     " but body is " + values.shape_string());
  }
  return EmbeddingTable{std::move(values)};
}

}  // namespace ssmtl
