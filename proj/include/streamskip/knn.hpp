#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "streamskip/backend.hpp"
#include "streamskip/core.hpp"
#include "streamskip/rng.hpp"

namespace streamskip::knn {

// ---------------------------------------------------------------------------
// Stores and result sets

/// Row-major embedding matrix paired with the latents those embeddings map
/// to. payloads may be empty for search-only stores; when present there is
/// exactly one latent per row.
struct VectorStore {
  std::size_t dim = 0;
  std::vector<float> vectors;
  std::vector<LatentTensor> payloads;
  bool normalized = false;

  std::size_t size() const { return dim == 0 ? 0 : vectors.size() / dim; }
  const float* row(std::size_t i) const { return vectors.data() + i * dim; }

  void add(std::span<const float> v) {
    if (dim == 0) dim = v.size();
    if (v.size() != dim) throw std::invalid_argument("VectorStore: dimension mismatch");
    vectors.insert(vectors.end(), v.begin(), v.end());
  }
  void add(std::span<const float> v, LatentTensor payload) {
    if (payloads.size() != size())
      throw std::invalid_argument("VectorStore: mixing payload and payload-free rows");
    add(v);
    payloads.push_back(std::move(payload));
  }
};

/// k nearest ids with ascending L2 distances; ties resolve to the lower id.
struct NeighborSet {
  std::vector<std::uint32_t> ids;
  std::vector<float> distances;

  std::size_t k() const { return ids.size(); }
};

struct FlatIndex {
  const VectorStore* store = nullptr;
};

inline void l2_normalize(std::span<float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  if (s <= 0.0) return;
  const float inv = static_cast<float>(1.0 / std::sqrt(s));
  for (float& x : v) x *= inv;
}

namespace detail {

inline double l2_sq_d(const float* a, const float* b, std::size_t d) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= d; i += 4) {
    const double d0 = static_cast<double>(a[i]) - b[i];
    const double d1 = static_cast<double>(a[i + 1]) - b[i + 1];
    const double d2 = static_cast<double>(a[i + 2]) - b[i + 2];
    const double d3 = static_cast<double>(a[i + 3]) - b[i + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; i < d; ++i) {
    const double dd = static_cast<double>(a[i]) - b[i];
    s0 += dd * dd;
  }
  return (s0 + s1) + (s2 + s3);
}

inline float l2_sq_f(const float* a, const float* b, std::size_t d) {
  float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f, s3 = 0.0f;
  std::size_t i = 0;
  for (; i + 4 <= d; i += 4) {
    const float d0 = a[i] - b[i];
    const float d1 = a[i + 1] - b[i + 1];
    const float d2 = a[i + 2] - b[i + 2];
    const float d3 = a[i + 3] - b[i + 3];
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; i < d; ++i) {
    const float dd = a[i] - b[i];
    s0 += dd * dd;
  }
  return (s0 + s1) + (s2 + s3);
}

/// Bounded selection of the k smallest (distance, id) pairs; worst candidate
/// sits on top of a max-heap ordered lexicographically so distance ties
/// resolve toward the lower id.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

  void offer(double dist, std::uint32_t id) {
    std::pair<double, std::uint32_t> cand{dist, id};
    if (heap_.size() < k_) {
      heap_.push_back(cand);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (cand < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = cand;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  /// Ascending result; squared distances are converted to L2 here.
  NeighborSet finish_sqrt() {
    std::sort(heap_.begin(), heap_.end());
    NeighborSet out;
    out.ids.reserve(heap_.size());
    out.distances.reserve(heap_.size());
    for (const auto& [d, id] : heap_) {
      out.ids.push_back(id);
      out.distances.push_back(static_cast<float>(std::sqrt(d)));
    }
    return out;
  }

 private:
  std::size_t k_;
  std::vector<std::pair<double, std::uint32_t>> heap_;
};

inline NeighborSet flat_search_raw(const float* base, std::size_t n, std::size_t dim,
                                   const float* q, std::size_t k) {
  if (k < 1 || k > n)
    throw std::invalid_argument("flat_search: k must be in [1, store size]");
  TopK top(k);
  for (std::size_t i = 0; i < n; ++i)
    top.offer(l2_sq_d(base + i * dim, q, dim), static_cast<std::uint32_t>(i));
  return top.finish_sqrt();
}

}  // namespace detail

/// Exhaustive exact search.
inline NeighborSet flat_search(const FlatIndex& index, const EmbeddingVector& query,
                               std::size_t k) {
  if (!index.store) throw std::invalid_argument("flat_search: index has no store");
  const VectorStore& s = *index.store;
  if (query.dim() != s.dim)
    throw std::invalid_argument("flat_search: query dimension mismatch");
  return detail::flat_search_raw(s.vectors.data(), s.size(), s.dim, query.data.data(), k);
}

// ---------------------------------------------------------------------------
// k-means

struct KmeansResult {
  std::vector<float> centroids;          // k x dim
  std::vector<double> inertia_per_iter;  // after each assignment pass
};

/// k-means++ seeding followed by Lloyd iterations. Deterministic for a given
/// seed; distance ties go to the lower centroid index; empty clusters are
/// reseeded to the point currently farthest from its centroid.
inline KmeansResult kmeans_train(std::span<const float> data, std::size_t n,
                                 std::size_t dim, std::size_t k, int iters, Seed seed) {
  if (n == 0 || dim == 0) throw std::invalid_argument("kmeans_train: empty input");
  if (data.size() != n * dim)
    throw std::invalid_argument("kmeans_train: data size != n*dim");
  if (k < 1 || k > n) throw std::invalid_argument("kmeans_train: k must be in [1, n]");
  if (iters < 1) throw std::invalid_argument("kmeans_train: iters must be >= 1");

  Rng rng(seed.value);
  KmeansResult result;
  result.centroids.resize(k * dim);
  auto centroid = [&](std::size_t c) { return result.centroids.data() + c * dim; };

  // k-means++ : D^2-weighted sampling of the remaining seeds.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.uniform_index(n));
  std::copy_n(data.data() + first * dim, dim, centroid(0));
  for (std::size_t c = 1; c < k; ++c) {
    const float* prev = centroid(c - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = detail::l2_sq_f(data.data() + i * dim, prev, dim);
      if (d < d2[i]) d2[i] = d;
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.uniform_index(n));
    }
    std::copy_n(data.data() + pick * dim, dim, centroid(c));
  }

  std::vector<std::uint32_t> assign(n, 0);
  std::vector<double> best(n, 0.0);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);

  for (int it = 0; it < iters; ++it) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* x = data.data() + i * dim;
      float bd = std::numeric_limits<float>::infinity();
      std::uint32_t bc = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const float d = detail::l2_sq_f(x, centroid(c), dim);
        if (d < bd) {
          bd = d;
          bc = static_cast<std::uint32_t>(c);
        }
      }
      assign[i] = bc;
      best[i] = bd;
      inertia += bd;
    }
    result.inertia_per_iter.push_back(inertia);

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const float* x = data.data() + i * dim;
      double* s = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
      for (std::size_t j = 0; j < dim; ++j) s[j] += x[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        std::size_t far = 0;
        double fd = -1.0;
        for (std::size_t i = 0; i < n; ++i)
          if (best[i] > fd) {
            fd = best[i];
            far = i;
          }
        std::copy_n(data.data() + far * dim, dim, centroid(c));
        best[far] = 0.0;
        continue;
      }
      const double inv = 1.0 / static_cast<double>(counts[c]);
      const double* s = sums.data() + c * dim;
      float* dst = centroid(c);
      for (std::size_t j = 0; j < dim; ++j) dst[j] = static_cast<float>(s[j] * inv);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Product quantization

struct PqCodebooks {
  std::size_t m = 0;
  std::size_t nbits = 8;
  std::size_t dsub = 0;
  std::vector<float> centers;  // m x 2^nbits x dsub
  double train_mse = 0.0;      // mean squared reconstruction error on the training set

  std::size_t ksub() const { return static_cast<std::size_t>(1) << nbits; }
  const float* center(std::size_t s, std::size_t j) const {
    return centers.data() + (s * ksub() + j) * dsub;
  }
};

inline void pq_encode(const PqCodebooks& cb, const float* vec, std::uint8_t* code) {
  for (std::size_t s = 0; s < cb.m; ++s) {
    const float* sub = vec + s * cb.dsub;
    float bd = std::numeric_limits<float>::infinity();
    std::size_t bj = 0;
    for (std::size_t j = 0; j < cb.ksub(); ++j) {
      const float d = detail::l2_sq_f(sub, cb.center(s, j), cb.dsub);
      if (d < bd) {
        bd = d;
        bj = j;
      }
    }
    code[s] = static_cast<std::uint8_t>(bj);
  }
}

inline void pq_decode(const PqCodebooks& cb, const std::uint8_t* code, float* out) {
  for (std::size_t s = 0; s < cb.m; ++s)
    std::copy_n(cb.center(s, code[s]), cb.dsub, out + s * cb.dsub);
}

/// Independent per-subspace codebooks of size 2^nbits trained by k-means.
inline PqCodebooks pq_train(std::span<const float> data, std::size_t n, std::size_t dim,
                            std::size_t m, std::size_t nbits, int iters, Seed seed) {
  if (m < 1 || dim % m != 0) throw std::invalid_argument("pq_train: m must divide dim");
  if (nbits < 1 || nbits > 8)
    throw std::invalid_argument("pq_train: nbits must be in [1,8] (byte codes)");
  const std::size_t ksub = static_cast<std::size_t>(1) << nbits;
  if (ksub > n)
    throw std::invalid_argument("pq_train: need at least 2^nbits training vectors");
  if (data.size() != n * dim)
    throw std::invalid_argument("pq_train: data size != n*dim");

  PqCodebooks cb;
  cb.m = m;
  cb.nbits = nbits;
  cb.dsub = dim / m;
  cb.centers.resize(m * ksub * cb.dsub);

  std::vector<float> sub(n * cb.dsub);
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(data.data() + i * dim + s * cb.dsub, cb.dsub,
                  sub.data() + i * cb.dsub);
    KmeansResult km = kmeans_train(sub, n, cb.dsub, ksub, iters,
                                   Seed{seed.value + 0x9E3779B97F4A7C15ull * (s + 1)});
    std::copy(km.centroids.begin(), km.centroids.end(),
              cb.centers.begin() + s * ksub * cb.dsub);
  }

  double err = 0.0;
  std::vector<std::uint8_t> code(m);
  std::vector<float> rec(dim);
  for (std::size_t i = 0; i < n; ++i) {
    pq_encode(cb, data.data() + i * dim, code.data());
    pq_decode(cb, code.data(), rec.data());
    err += detail::l2_sq_d(data.data() + i * dim, rec.data(), dim);
  }
  cb.train_mse = err / static_cast<double>(n);
  return cb;
}

// ---------------------------------------------------------------------------
// IVF-PQ

struct IvfPqParams {
  std::size_t nlist = 256;
  std::size_t m = 48;
  std::size_t nbits = 8;
  int kmeans_iters = 8;
  int pq_iters = 6;
  std::size_t train_sample = 16384;
  Seed seed{0};
};

/// Coarse k-means partition plus per-list PQ codes of the residuals
/// (vector - assigned centroid). Immutable once built; concurrent read-only
/// searches are safe.
struct IvfPqIndex {
  std::size_t dim = 0;
  std::size_t nlist = 0;
  std::size_t m = 0;
  std::size_t nbits = 8;
  std::vector<float> centroids;  // nlist x dim
  PqCodebooks codebooks;
  struct InvertedList {
    std::vector<std::uint32_t> ids;
    std::vector<std::uint8_t> codes;  // m bytes per id
  };
  std::vector<InvertedList> lists;

  std::size_t ntotal() const {
    std::size_t t = 0;
    for (const auto& l : lists) t += l.ids.size();
    return t;
  }
  const float* centroid(std::size_t c) const { return centroids.data() + c * dim; }

  /// centroid + decoded residual for a stored entry.
  std::vector<float> reconstruct(std::size_t list, std::size_t pos) const {
    std::vector<float> out(dim);
    pq_decode(codebooks, lists[list].codes.data() + pos * m, out.data());
    const float* c = centroid(list);
    for (std::size_t j = 0; j < dim; ++j) out[j] += c[j];
    return out;
  }
};

inline IvfPqIndex ivfpq_build(const VectorStore& store, const IvfPqParams& params) {
  const std::size_t n = store.size();
  const std::size_t dim = store.dim;
  if (params.nlist < 1) throw std::invalid_argument("ivfpq_build: nlist must be >= 1");
  if (params.m < 1 || dim % params.m != 0)
    throw std::invalid_argument("ivfpq_build: m must divide dim");
  if (params.nbits < 1 || params.nbits > 8)
    throw std::invalid_argument("ivfpq_build: nbits must be in [1,8]");
  const std::size_t ksub = static_cast<std::size_t>(1) << params.nbits;
  if (n < std::max(params.nlist, ksub))
    throw std::invalid_argument(
        "ivfpq_build: insufficient data (need at least max(nlist, 2^nbits) vectors)");

  // Training subsample, at least nlist and 2^nbits vectors.
  std::size_t sample_n = std::max({params.train_sample, params.nlist, ksub});
  sample_n = std::min(sample_n, n);
  std::vector<std::uint32_t> sample_ids(n);
  std::iota(sample_ids.begin(), sample_ids.end(), 0u);
  if (sample_n < n) {
    Rng rng(params.seed.value ^ 0xA5A5A5A55A5A5A5Aull);
    for (std::size_t i = 0; i < sample_n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
      std::swap(sample_ids[i], sample_ids[j]);
    }
    sample_ids.resize(sample_n);
    std::sort(sample_ids.begin(), sample_ids.end());
  }

  std::vector<float> sample(sample_n * dim);
  for (std::size_t i = 0; i < sample_n; ++i)
    std::copy_n(store.row(sample_ids[i]), dim, sample.data() + i * dim);

  IvfPqIndex index;
  index.dim = dim;
  index.nlist = params.nlist;
  index.m = params.m;
  index.nbits = params.nbits;
  index.centroids =
      kmeans_train(sample, sample_n, dim, params.nlist, params.kmeans_iters, params.seed)
          .centroids;
  index.lists.resize(params.nlist);

  // Assign every vector to its nearest coarse centroid.
  std::vector<std::uint32_t> assign(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* x = store.row(i);
    float bd = std::numeric_limits<float>::infinity();
    std::uint32_t bc = 0;
    for (std::size_t c = 0; c < params.nlist; ++c) {
      const float d = detail::l2_sq_f(x, index.centroid(c), dim);
      if (d < bd) {
        bd = d;
        bc = static_cast<std::uint32_t>(c);
      }
    }
    assign[i] = bc;
  }

  // PQ codebooks over sample residuals.
  for (std::size_t i = 0; i < sample_n; ++i) {
    const float* c = index.centroid(assign[sample_ids[i]]);
    float* r = sample.data() + i * dim;
    for (std::size_t j = 0; j < dim; ++j) r[j] -= c[j];
  }
  index.codebooks = pq_train(sample, sample_n, dim, params.m, params.nbits,
                             params.pq_iters,
                             Seed{params.seed.value ^ 0xC2B2AE3D27D4EB4Full});

  std::vector<float> residual(dim);
  std::vector<std::uint8_t> code(params.m);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t c = assign[i];
    const float* x = store.row(i);
    const float* cc = index.centroid(c);
    for (std::size_t j = 0; j < dim; ++j) residual[j] = x[j] - cc[j];
    pq_encode(index.codebooks, residual.data(), code.data());
    auto& list = index.lists[c];
    list.ids.push_back(static_cast<std::uint32_t>(i));
    list.codes.insert(list.codes.end(), code.begin(), code.end());
  }
  return index;
}

/// Scan the nprobe nearest inverted lists with an asymmetric distance table
/// (query-residual-to-codeword distances per subspace).
inline NeighborSet ivfpq_search(const IvfPqIndex& index, const EmbeddingVector& query,
                                std::size_t k, std::size_t nprobe) {
  if (query.dim() != index.dim)
    throw std::invalid_argument("ivfpq_search: query dimension mismatch");
  if (nprobe < 1 || nprobe > index.nlist)
    throw std::invalid_argument("ivfpq_search: nprobe must be in [1, nlist]");
  if (k < 1) throw std::invalid_argument("ivfpq_search: k must be >= 1");

  std::vector<std::pair<float, std::uint32_t>> coarse(index.nlist);
  for (std::size_t c = 0; c < index.nlist; ++c)
    coarse[c] = {detail::l2_sq_f(query.data.data(), index.centroid(c), index.dim),
                 static_cast<std::uint32_t>(c)};
  std::partial_sort(coarse.begin(), coarse.begin() + static_cast<long>(nprobe),
                    coarse.end());

  const PqCodebooks& cb = index.codebooks;
  const std::size_t ksub = cb.ksub();
  std::vector<float> residual(index.dim);
  std::vector<float> lut(index.m * ksub);
  detail::TopK top(k);

  for (std::size_t p = 0; p < nprobe; ++p) {
    const std::uint32_t c = coarse[p].second;
    const auto& list = index.lists[c];
    if (list.ids.empty()) continue;
    const float* cc = index.centroid(c);
    for (std::size_t j = 0; j < index.dim; ++j)
      residual[j] = query.data[j] - cc[j];
    for (std::size_t s = 0; s < index.m; ++s) {
      const float* sub = residual.data() + s * cb.dsub;
      float* row = lut.data() + s * ksub;
      for (std::size_t j = 0; j < ksub; ++j)
        row[j] = detail::l2_sq_f(sub, cb.center(s, j), cb.dsub);
    }
    const std::uint8_t* codes = list.codes.data();
    for (std::size_t e = 0; e < list.ids.size(); ++e) {
      const std::uint8_t* code = codes + e * index.m;
      float d = 0.0f;
      for (std::size_t s = 0; s < index.m; ++s) d += lut[s * ksub + code[s]];
      top.offer(static_cast<double>(d), list.ids[e]);
    }
  }
  return top.finish_sqrt();
}

// ---------------------------------------------------------------------------
// Index persistence ("IVPQ" little-endian container)

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("corrupt index: unexpected end of file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_index(const IvfPqIndex& index, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_index: cannot open " + path.string());
  os.write("IVPQ", 4);
  detail::write_u32(os, 1);  // version
  detail::write_u32(os, static_cast<std::uint32_t>(index.nlist));
  detail::write_u32(os, static_cast<std::uint32_t>(index.m));
  detail::write_u32(os, static_cast<std::uint32_t>(index.nbits));
  detail::write_u32(os, static_cast<std::uint32_t>(index.dim));
  os.write(reinterpret_cast<const char*>(index.centroids.data()),
           static_cast<std::streamsize>(index.centroids.size() * 4));
  os.write(reinterpret_cast<const char*>(index.codebooks.centers.data()),
           static_cast<std::streamsize>(index.codebooks.centers.size() * 4));
  for (const auto& list : index.lists) {
    detail::write_u32(os, static_cast<std::uint32_t>(list.ids.size()));
    for (std::size_t e = 0; e < list.ids.size(); ++e) {
      detail::write_u32(os, list.ids[e]);
      os.write(reinterpret_cast<const char*>(list.codes.data() + e * index.m),
               static_cast<std::streamsize>(index.m));
    }
  }
  if (!os) throw std::runtime_error("save_index: write failed for " + path.string());
}

inline IvfPqIndex load_index(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_index: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "IVPQ", 4) != 0)
    throw std::runtime_error("corrupt index: bad magic in " + path.string());
  const std::uint32_t version = detail::read_u32(is);
  if (version != 1)
    throw std::runtime_error("corrupt index: unsupported version in " + path.string());
  IvfPqIndex index;
  index.nlist = detail::read_u32(is);
  index.m = detail::read_u32(is);
  index.nbits = detail::read_u32(is);
  index.dim = detail::read_u32(is);
  if (index.nlist < 1 || index.m < 1 || index.nbits < 1 || index.nbits > 8 ||
      index.dim < 1 || index.dim % index.m != 0)
    throw std::runtime_error("corrupt index: bad header in " + path.string());
  index.centroids.resize(index.nlist * index.dim);
  is.read(reinterpret_cast<char*>(index.centroids.data()),
          static_cast<std::streamsize>(index.centroids.size() * 4));
  index.codebooks.m = index.m;
  index.codebooks.nbits = index.nbits;
  index.codebooks.dsub = index.dim / index.m;
  index.codebooks.centers.resize(index.m * index.codebooks.ksub() * index.codebooks.dsub);
  is.read(reinterpret_cast<char*>(index.codebooks.centers.data()),
          static_cast<std::streamsize>(index.codebooks.centers.size() * 4));
  if (!is) throw std::runtime_error("corrupt index: truncated blocks in " + path.string());
  index.lists.resize(index.nlist);
  for (auto& list : index.lists) {
    const std::uint32_t len = detail::read_u32(is);
    list.ids.resize(len);
    list.codes.resize(static_cast<std::size_t>(len) * index.m);
    for (std::uint32_t e = 0; e < len; ++e) {
      list.ids[e] = detail::read_u32(is);
      is.read(reinterpret_cast<char*>(list.codes.data() + static_cast<std::size_t>(e) * index.m),
              static_cast<std::streamsize>(index.m));
    }
  }
  if (!is) throw std::runtime_error("corrupt index: truncated lists in " + path.string());
  return index;
}

// ---------------------------------------------------------------------------
// Embedding file I/O: u32 dimension header, then row-major little-endian f32
// values; the row count is implied by the file size.

inline void write_vectors(const std::filesystem::path& path, std::size_t dim,
                          std::span<const float> values) {
  if (dim == 0 || values.size() % dim != 0)
    throw std::invalid_argument("write_vectors: values not a multiple of dim");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_vectors: cannot open " + path.string());
  detail::write_u32(os, static_cast<std::uint32_t>(dim));
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size() * 4));
  if (!os) throw std::runtime_error("write_vectors: write failed for " + path.string());
}

struct VectorFile {
  std::size_t dim = 0;
  std::vector<float> values;
  std::size_t count() const { return dim == 0 ? 0 : values.size() / dim; }
};

inline VectorFile read_vectors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("read_vectors: cannot open " + path.string());
  const std::streamsize bytes = is.tellg();
  is.seekg(0);
  if (bytes < 4) throw std::runtime_error("read_vectors: truncated file " + path.string());
  VectorFile vf;
  vf.dim = detail::read_u32(is);
  const std::streamsize payload = bytes - 4;
  if (vf.dim == 0 || payload % 4 != 0 ||
      (static_cast<std::size_t>(payload) / 4) % vf.dim != 0)
    throw std::runtime_error("read_vectors: malformed file " + path.string());
  vf.values.resize(static_cast<std::size_t>(payload) / 4);
  is.read(reinterpret_cast<char*>(vf.values.data()), payload);
  if (!is) throw std::runtime_error("read_vectors: truncated data in " + path.string());
  return vf;
}

// ---------------------------------------------------------------------------
// Synthesis

/// Softmax-weighted blend of the neighbors' payload latents. Weights are
/// softmax(-d/temperature); the output is clamped to the elementwise hull of
/// the payloads, which the exact blend already lies in.
inline LatentTensor weighted_latent_average(const NeighborSet& neighbors,
                                            const VectorStore& store, float temperature) {
  if (neighbors.k() == 0)
    throw std::invalid_argument("weighted_latent_average: empty neighbor set");
  if (!(temperature > 0.0f))
    throw std::invalid_argument("weighted_latent_average: temperature must be > 0");
  if (store.payloads.size() != store.size())
    throw std::invalid_argument("weighted_latent_average: store has no payload latents");

  float dmin = neighbors.distances[0];
  for (float d : neighbors.distances) dmin = std::min(dmin, d);
  std::vector<double> w(neighbors.k());
  double wsum = 0.0;
  for (std::size_t i = 0; i < neighbors.k(); ++i) {
    w[i] = std::exp(-static_cast<double>(neighbors.distances[i] - dmin) / temperature);
    wsum += w[i];
  }
  for (auto& x : w) x /= wsum;

  const LatentTensor& first = store.payloads.at(neighbors.ids[0]);
  LatentTensor out = make_latent(first.channels, first.height, first.width);
  out.source_frame_id = first.source_frame_id;
  const std::size_t sz = out.data.size();
  std::vector<double> acc(sz, 0.0);
  std::vector<float> lo(sz, std::numeric_limits<float>::infinity());
  std::vector<float> hi(sz, -std::numeric_limits<float>::infinity());
  for (std::size_t i = 0; i < neighbors.k(); ++i) {
    const LatentTensor& lat = store.payloads.at(neighbors.ids[i]);
    if (lat.channels != first.channels || lat.height != first.height ||
        lat.width != first.width)
      throw std::invalid_argument("weighted_latent_average: payload shape mismatch");
    const double wi = w[i];
    for (std::size_t j = 0; j < sz; ++j) {
      const float v = lat.data[j];
      acc[j] += wi * v;
      lo[j] = std::min(lo[j], v);
      hi[j] = std::max(hi[j], v);
    }
  }
  for (std::size_t j = 0; j < sz; ++j)
    out.data[j] = streamskip::detail::clampf(static_cast<float>(acc[j]), lo[j], hi[j]);
  return out;
}

/// Exact search over flattened latents; same contract as flat_search.
inline NeighborSet latent_knn_search(const VectorStore& store,
                                     const LatentTensor& query, std::size_t k) {
  if (store.dim != query.element_count())
    throw std::invalid_argument("latent_knn_search: flattened latent size mismatch");
  return detail::flat_search_raw(store.vectors.data(), store.size(), store.dim,
                                 query.data.data(), k);
}

inline float auto_temperature(const NeighborSet& neighbors) {
  if (neighbors.k() == 0) return 1.0f;
  double s = 0.0;
  for (float d : neighbors.distances) s += d;
  const double mean = s / static_cast<double>(neighbors.k());
  return mean > 0.0 ? static_cast<float>(mean) : 1.0f;
}

struct SynthesisOptions {
  std::size_t k = 4;
  std::optional<float> temperature;  // default: mean neighbor distance
  std::size_t nprobe = 8;            // IVF-PQ route only
};

namespace detail {

inline LatentTensor synthesize_from(const NeighborSet& nb, const VectorStore& store,
                                    backend::Stage& denoise, Seed,
                                    const SynthesisOptions& opts) {
  const float t = opts.temperature.value_or(auto_temperature(nb));
  LatentTensor avg = weighted_latent_average(nb, store, t);
  backend::Payload out = denoise.process(backend::Payload(std::move(avg)));
  auto* lat = std::get_if<LatentTensor>(&out);
  if (!lat)
    throw std::invalid_argument("hybrid_synthesize: denoise stage must output a latent");
  return std::move(*lat);
}

}  // namespace detail

/// Retrieval-initialized synthesis: search, blend in latent space, then one
/// refinement pass through the denoise stage.
inline LatentTensor hybrid_synthesize(const EmbeddingVector& query, const FlatIndex& index,
                                      const VectorStore& store, backend::Stage& denoise,
                                      Seed seed, const SynthesisOptions& opts = {}) {
  return detail::synthesize_from(flat_search(index, query, opts.k), store, denoise, seed,
                                 opts);
}

inline LatentTensor hybrid_synthesize(const EmbeddingVector& query,
                                      const IvfPqIndex& index, const VectorStore& store,
                                      backend::Stage& denoise, Seed seed,
                                      const SynthesisOptions& opts = {}) {
  return detail::synthesize_from(ivfpq_search(index, query, opts.k, opts.nprobe), store,
                                 denoise, seed, opts);
}

}  // namespace streamskip::knn
