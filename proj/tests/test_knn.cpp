#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>

#include "streamskip/knn.hpp"
#include "streamskip/synthetic.hpp"

using namespace streamskip;
using namespace streamskip::knn;

namespace {

// Independent oracle: full scan, double accumulation, sort by (distance, id).
// Shares no code with the library search path.
std::vector<std::uint32_t> brute_force_ids(const std::vector<float>& base,
                                           std::size_t dim, const std::vector<float>& q,
                                           std::size_t k) {
  const std::size_t n = base.size() / dim;
  std::vector<std::pair<double, std::uint32_t>> all(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = static_cast<double>(base[i * dim + j]) - q[j];
      d += diff * diff;
    }
    all[i] = {d, static_cast<std::uint32_t>(i)};
  }
  std::sort(all.begin(), all.end());
  std::vector<std::uint32_t> ids(k);
  for (std::size_t i = 0; i < k; ++i) ids[i] = all[i].second;
  return ids;
}

VectorStore random_store(std::size_t n, std::size_t dim, std::uint64_t seed) {
  VectorStore store;
  store.dim = dim;
  store.vectors = synthetic::random_vectors(n, dim, Seed{seed});
  return store;
}

EmbeddingVector query_of(std::vector<float> v) {
  EmbeddingVector q;
  q.data = std::move(v);
  return q;
}

double recall_against_flat(const IvfPqIndex& index, const VectorStore& store,
                           const std::vector<EmbeddingVector>& queries, std::size_t k,
                           std::size_t nprobe) {
  FlatIndex flat{&store};
  double hits = 0.0;
  for (const auto& q : queries) {
    NeighborSet truth = flat_search(flat, q, k);
    NeighborSet approx = ivfpq_search(index, q, k, nprobe);
    for (auto id : approx.ids)
      if (std::find(truth.ids.begin(), truth.ids.end(), id) != truth.ids.end())
        hits += 1.0;
  }
  return hits / (static_cast<double>(queries.size()) * static_cast<double>(k));
}

}  // namespace

TEST_CASE("flat_search finds an exact self-match at distance zero") {
  VectorStore store = random_store(100, 32, 1);
  FlatIndex index{&store};
  EmbeddingVector q = query_of({store.row(37), store.row(37) + 32});
  NeighborSet nb = flat_search(index, q, 3);
  REQUIRE(nb.ids[0] == 37);
  REQUIRE(nb.distances[0] == 0.0f);
  REQUIRE(std::is_sorted(nb.distances.begin(), nb.distances.end()));
}

TEST_CASE("flat_search with k=n returns every id sorted by distance") {
  VectorStore store = random_store(50, 16, 2);
  FlatIndex index{&store};
  EmbeddingVector q = query_of(synthetic::random_vectors(1, 16, Seed{3}));
  NeighborSet nb = flat_search(index, q, 50);
  REQUIRE(nb.k() == 50);
  std::vector<std::uint32_t> sorted_ids = nb.ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());
  for (std::size_t i = 0; i < 50; ++i) REQUIRE(sorted_ids[i] == i);
  REQUIRE(std::is_sorted(nb.distances.begin(), nb.distances.end()));
}

TEST_CASE("flat_search matches the brute-force oracle id-for-id") {
  VectorStore store = random_store(1000, 64, 4);
  FlatIndex index{&store};
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    EmbeddingVector q = query_of(synthetic::random_vectors(1, 64, Seed{rng.next_u64()}));
    NeighborSet nb = flat_search(index, q, 10);
    REQUIRE(nb.ids == brute_force_ids(store.vectors, 64, q.data, 10));
  }
}

TEST_CASE("flat_search breaks distance ties toward the lower id") {
  VectorStore store;
  store.dim = 4;
  const std::vector<float> v{0.5f, 0.5f, 0.5f, 0.5f};
  for (int i = 0; i < 5; ++i) store.add(v);  // five identical rows
  FlatIndex index{&store};
  NeighborSet nb = flat_search(index, query_of({v}), 3);
  REQUIRE(nb.ids == std::vector<std::uint32_t>{0, 1, 2});
}

TEST_CASE("flat_search validates queries") {
  VectorStore store = random_store(10, 8, 6);
  FlatIndex index{&store};
  EmbeddingVector wrong = query_of(std::vector<float>(4, 0.0f));
  REQUIRE_THROWS_AS(flat_search(index, wrong, 2), std::invalid_argument);
  EmbeddingVector ok = query_of(std::vector<float>(8, 0.0f));
  REQUIRE_THROWS_AS(flat_search(index, ok, 11), std::invalid_argument);
  REQUIRE_THROWS_AS(flat_search(index, ok, 0), std::invalid_argument);
}

TEST_CASE("kmeans with k=n lands a centroid on every point") {
  const std::size_t n = 16, dim = 8;
  std::vector<float> data = synthetic::random_vectors(n, dim, Seed{7});
  KmeansResult result = kmeans_train(data, n, dim, n, 5, Seed{8});
  REQUIRE(result.inertia_per_iter.back() == 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    bool found = false;
    for (std::size_t c = 0; c < n && !found; ++c) {
      bool equal = true;
      for (std::size_t j = 0; j < dim; ++j)
        if (result.centroids[c * dim + j] != data[i * dim + j]) {
          equal = false;
          break;
        }
      found = equal;
    }
    REQUIRE(found);
  }
}

TEST_CASE("kmeans recovers two well-separated blob means") {
  const std::size_t dim = 8, per_blob = 400;
  Rng rng(9);
  std::vector<float> data;
  std::vector<double> mean_a(dim, 0.0), mean_b(dim, 0.0);
  for (std::size_t i = 0; i < per_blob; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      const float v = 0.2f * rng.normal_float();
      data.push_back(v);
      mean_a[j] += v;
    }
  for (std::size_t i = 0; i < per_blob; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      const float v = 10.0f + 0.2f * rng.normal_float();
      data.push_back(v);
      mean_b[j] += v;
    }
  for (auto& v : mean_a) v /= per_blob;
  for (auto& v : mean_b) v /= per_blob;

  KmeansResult result = kmeans_train(data, 2 * per_blob, dim, 2, 10, Seed{10});
  auto dist_to = [&](std::size_t c, const std::vector<double>& mean) {
    double d = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = result.centroids[c * dim + j] - mean[j];
      d += diff * diff;
    }
    return std::sqrt(d);
  };
  const double a0 = dist_to(0, mean_a), b0 = dist_to(0, mean_b);
  const std::size_t ca = a0 < b0 ? 0 : 1;
  REQUIRE(dist_to(ca, mean_a) < 0.1);
  REQUIRE(dist_to(1 - ca, mean_b) < 0.1);
}

TEST_CASE("kmeans is deterministic for a fixed seed") {
  std::vector<float> data = synthetic::random_vectors(500, 16, Seed{11});
  KmeansResult a = kmeans_train(data, 500, 16, 8, 6, Seed{12});
  KmeansResult b = kmeans_train(data, 500, 16, 8, 6, Seed{12});
  REQUIRE(a.centroids == b.centroids);
  KmeansResult c = kmeans_train(data, 500, 16, 8, 6, Seed{13});
  REQUIRE(a.centroids != c.centroids);
}

TEST_CASE("kmeans inertia is non-increasing across Lloyd iterations") {
  std::vector<float> data =
      synthetic::clustered_vectors(2000, 16, 10, 0.1f, Seed{14});
  KmeansResult result = kmeans_train(data, 2000, 16, 10, 12, Seed{15});
  for (std::size_t i = 1; i < result.inertia_per_iter.size(); ++i)
    REQUIRE(result.inertia_per_iter[i] <=
            result.inertia_per_iter[i - 1] * (1.0 + 1e-9) + 1e-9);
}

TEST_CASE("kmeans validates arguments") {
  std::vector<float> data = synthetic::random_vectors(4, 4, Seed{16});
  REQUIRE_THROWS_AS(kmeans_train(data, 4, 4, 5, 3, Seed{0}), std::invalid_argument);
  REQUIRE_THROWS_AS(kmeans_train(data, 4, 4, 2, 0, Seed{0}), std::invalid_argument);
}

TEST_CASE("pq_train reaches zero error when the codebook covers the data") {
  // Vectors drawn from 4 distinct values per 1-d subspace, nbits=2 codewords.
  const std::size_t n = 256, dim = 8, m = 8;
  Rng rng(17);
  std::vector<float> data(n * dim);
  const float levels[4] = {-1.5f, -0.5f, 0.5f, 1.5f};
  for (auto& v : data) v = levels[rng.uniform_index(4)];
  PqCodebooks cb = pq_train(data, n, dim, m, 2, 12, Seed{18});
  REQUIRE(cb.train_mse < 1e-12);
}

TEST_CASE("pq_train beats a random codebook on reconstruction error") {
  const std::size_t n = 2000, dim = 32, m = 4;
  std::vector<float> data = synthetic::clustered_vectors(n, dim, 32, 0.1f, Seed{19});
  PqCodebooks trained = pq_train(data, n, dim, m, 6, 8, Seed{20});

  // Random codebook: codewords sampled uniformly from the data's subvectors.
  PqCodebooks random_cb = trained;
  Rng rng(21);
  const std::size_t dsub = dim / m;
  for (std::size_t s = 0; s < m; ++s)
    for (std::size_t j = 0; j < random_cb.ksub(); ++j) {
      const std::size_t pick = rng.uniform_index(n);
      std::copy_n(data.data() + pick * dim + s * dsub, dsub,
                  random_cb.centers.data() + (s * random_cb.ksub() + j) * dsub);
    }
  auto mse_of = [&](const PqCodebooks& cb) {
    std::vector<std::uint8_t> code(m);
    std::vector<float> rec(dim);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pq_encode(cb, data.data() + i * dim, code.data());
      pq_decode(cb, code.data(), rec.data());
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = data[i * dim + j] - rec[j];
        err += d * d;
      }
    }
    return err / static_cast<double>(n);
  };
  REQUIRE(mse_of(trained) < mse_of(random_cb));
}

TEST_CASE("pq_train is deterministic and validates m") {
  std::vector<float> data = synthetic::random_vectors(300, 16, Seed{22});
  PqCodebooks a = pq_train(data, 300, 16, 4, 4, 5, Seed{23});
  PqCodebooks b = pq_train(data, 300, 16, 4, 4, 5, Seed{23});
  REQUIRE(a.centers == b.centers);
  REQUIRE_THROWS_AS(pq_train(data, 300, 16, 7, 4, 5, Seed{23}), std::invalid_argument);
  REQUIRE_THROWS_AS(pq_train(data, 300, 16, 4, 9, 5, Seed{23}), std::invalid_argument);
}

TEST_CASE("ivfpq_build with nlist=1 produces one list holding everything") {
  VectorStore store = random_store(600, 16, 24);
  IvfPqParams params;
  params.nlist = 1;
  params.m = 4;
  params.nbits = 8;
  params.seed = Seed{25};
  IvfPqIndex index = ivfpq_build(store, params);
  REQUIRE(index.lists.size() == 1);
  REQUIRE(index.lists[0].ids.size() == 600);
}

TEST_CASE("ivfpq inverted lists partition the id set") {
  VectorStore store;
  store.dim = 32;
  store.vectors = synthetic::clustered_vectors(5000, 32, 64, 0.05f, Seed{26});
  IvfPqParams params;
  params.nlist = 16;
  params.m = 8;
  params.seed = Seed{27};
  IvfPqIndex index = ivfpq_build(store, params);
  std::vector<int> seen(5000, 0);
  for (const auto& list : index.lists) {
    REQUIRE(list.codes.size() == list.ids.size() * index.m);
    for (auto id : list.ids) {
      REQUIRE(id < 5000);
      ++seen[id];
    }
  }
  for (int s : seen) REQUIRE(s == 1);
}

TEST_CASE("ivfpq reconstruction error on held-out data stays near training error") {
  const std::size_t dim = 32;
  std::vector<float> all = synthetic::clustered_vectors(6000, dim, 64, 0.05f, Seed{28});
  VectorStore store;
  store.dim = dim;
  store.vectors.assign(all.begin(), all.begin() + 5000 * dim);
  IvfPqParams params;
  params.nlist = 16;
  params.m = 8;
  params.seed = Seed{29};
  IvfPqIndex index = ivfpq_build(store, params);

  // Held-out vectors: assign to the nearest centroid, encode, reconstruct.
  double err = 0.0;
  std::vector<std::uint8_t> code(index.m);
  std::vector<float> residual(dim), rec(dim);
  for (std::size_t i = 5000; i < 6000; ++i) {
    const float* x = all.data() + i * dim;
    std::size_t best = 0;
    float bd = std::numeric_limits<float>::infinity();
    for (std::size_t c = 0; c < index.nlist; ++c) {
      const float d = knn::detail::l2_sq_f(x, index.centroid(c), dim);
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    const float* cc = index.centroid(best);
    for (std::size_t j = 0; j < dim; ++j) residual[j] = x[j] - cc[j];
    pq_encode(index.codebooks, residual.data(), code.data());
    pq_decode(index.codebooks, code.data(), rec.data());
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = residual[j] - rec[j];
      err += d * d;
    }
  }
  err /= 1000.0;
  REQUIRE(err < index.codebooks.train_mse * 1.5);
}

TEST_CASE("ivfpq_build validates its inputs") {
  VectorStore tiny = random_store(100, 16, 30);
  IvfPqParams params;
  params.nlist = 256;  // more lists than vectors
  params.m = 4;
  REQUIRE_THROWS_AS(ivfpq_build(tiny, params), std::invalid_argument);
  params.nlist = 4;
  params.m = 5;  // 5 does not divide 16
  try {
    ivfpq_build(tiny, params);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    REQUIRE(std::string(e.what()).find("m must divide dim") != std::string::npos);
  }
}

TEST_CASE("ivfpq search is exact when quantization is lossless") {
  // 1-d subspaces with as many codewords as points and every list probed:
  // the codebooks reproduce each residual exactly, so ADC distances equal
  // true distances.
  const std::size_t n = 64, dim = 8;
  VectorStore store = random_store(n, dim, 31);
  IvfPqParams params;
  params.nlist = 4;
  params.m = 8;
  params.nbits = 6;  // 64 codewords
  params.pq_iters = 20;
  params.seed = Seed{32};
  IvfPqIndex index = ivfpq_build(store, params);
  REQUIRE(index.codebooks.train_mse < 1e-10);

  FlatIndex flat{&store};
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    EmbeddingVector q = query_of(synthetic::random_vectors(1, dim, Seed{rng.next_u64()}));
    NeighborSet truth = flat_search(flat, q, 10);
    NeighborSet approx = ivfpq_search(index, q, 10, params.nlist);
    REQUIRE(approx.ids == truth.ids);
  }
}

TEST_CASE("ivfpq recall on clustered data reaches 0.8 at nprobe 8") {
  VectorStore store;
  store.dim = 64;
  store.vectors = synthetic::clustered_vectors(10000, 64, 1000, 0.01f, Seed{34});
  IvfPqParams params;
  params.nlist = 64;
  params.m = 8;
  params.seed = Seed{35};
  IvfPqIndex index = ivfpq_build(store, params);

  Rng rng(36);
  std::vector<EmbeddingVector> queries(50);
  for (auto& q : queries) {
    const float* base = store.row(rng.uniform_index(10000));
    q.data.assign(base, base + 64);
    for (auto& v : q.data) v += 0.002f * rng.normal_float();
  }
  REQUIRE(recall_against_flat(index, store, queries, 10, 8) >= 0.8);
}

TEST_CASE("ivfpq recall is non-decreasing in nprobe") {
  VectorStore store;
  store.dim = 32;
  store.vectors = synthetic::clustered_vectors(8000, 32, 800, 0.01f, Seed{37});
  IvfPqParams params;
  params.nlist = 32;
  params.m = 8;
  params.seed = Seed{38};
  IvfPqIndex index = ivfpq_build(store, params);
  Rng rng(39);
  std::vector<EmbeddingVector> queries(60);
  for (auto& q : queries) {
    const float* base = store.row(rng.uniform_index(8000));
    q.data.assign(base, base + 32);
    for (auto& v : q.data) v += 0.02f * rng.normal_float();
  }
  double prev = -1.0;
  for (std::size_t nprobe : {1, 2, 4, 8, 16}) {
    const double r = recall_against_flat(index, store, queries, 10, nprobe);
    REQUIRE(r >= prev);
    prev = r;
  }
}

TEST_CASE("ivfpq_search validates nprobe") {
  VectorStore store = random_store(300, 16, 40);
  IvfPqParams params;
  params.nlist = 8;
  params.m = 4;
  params.seed = Seed{41};
  IvfPqIndex index = ivfpq_build(store, params);
  EmbeddingVector q = query_of(std::vector<float>(16, 0.0f));
  REQUIRE_THROWS_AS(ivfpq_search(index, q, 5, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(ivfpq_search(index, q, 5, 9), std::invalid_argument);
}

TEST_CASE("index persistence round-trips search results exactly") {
  VectorStore store;
  store.dim = 32;
  store.vectors = synthetic::clustered_vectors(2000, 32, 32, 0.05f, Seed{42});
  IvfPqParams params;
  params.nlist = 16;
  params.m = 8;
  params.seed = Seed{43};
  IvfPqIndex index = ivfpq_build(store, params);

  const auto path = std::filesystem::temp_directory_path() / "streamskip_test.ivpq";
  save_index(index, path);
  IvfPqIndex loaded = load_index(path);
  REQUIRE(loaded.nlist == index.nlist);
  REQUIRE(loaded.m == index.m);
  REQUIRE(loaded.ntotal() == index.ntotal());

  Rng rng(44);
  for (int trial = 0; trial < 5; ++trial) {
    EmbeddingVector q = query_of(synthetic::random_vectors(1, 32, Seed{rng.next_u64()}));
    NeighborSet a = ivfpq_search(index, q, 10, 8);
    NeighborSet b = ivfpq_search(loaded, q, 10, 8);
    REQUIRE(a.ids == b.ids);
    REQUIRE(a.distances == b.distances);
  }
  std::filesystem::remove(path);
}

TEST_CASE("corrupt index magic is rejected") {
  const auto path = std::filesystem::temp_directory_path() / "streamskip_corrupt.ivpq";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE12345678";
  }
  REQUIRE_THROWS_AS(load_index(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("vector file I/O round-trips") {
  const auto path = std::filesystem::temp_directory_path() / "streamskip_vecs.bin";
  std::vector<float> vals = synthetic::random_vectors(10, 16, Seed{45});
  write_vectors(path, 16, vals);
  VectorFile vf = read_vectors(path);
  REQUIRE(vf.dim == 16);
  REQUIRE(vf.count() == 10);
  REQUIRE(vf.values == vals);
  std::filesystem::remove(path);
}

namespace {

VectorStore payload_store(std::size_t n, int latent_side, std::uint64_t seed) {
  VectorStore store;
  store.dim = static_cast<std::size_t>(4) * latent_side * latent_side;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    LatentTensor lat = make_latent(4, latent_side, latent_side);
    for (auto& v : lat.data) v = rng.normal_float();
    std::vector<float> key(lat.data);
    store.add(key, std::move(lat));
  }
  return store;
}

}  // namespace

TEST_CASE("weighted_latent_average with k=1 returns the payload exactly") {
  VectorStore store = payload_store(20, 4, 46);
  NeighborSet nb;
  nb.ids = {7};
  nb.distances = {1.25f};
  LatentTensor out = weighted_latent_average(nb, store, 0.5f);
  REQUIRE(out.data == store.payloads[7].data);
}

TEST_CASE("weighted_latent_average of an equal-distance pair is the exact mean") {
  VectorStore store = payload_store(10, 4, 47);
  NeighborSet nb;
  nb.ids = {2, 5};
  nb.distances = {0.8f, 0.8f};
  LatentTensor out = weighted_latent_average(nb, store, 1.0f);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const float want =
        0.5f * store.payloads[2].data[i] + 0.5f * store.payloads[5].data[i];
    REQUIRE(out.data[i] == want);
  }
}

TEST_CASE("weighted_latent_average converges to the nearest payload as T -> 0") {
  VectorStore store = payload_store(6, 4, 48);
  NeighborSet nb;
  nb.ids = {3, 1, 4};
  nb.distances = {1.0f, 1.5f, 2.0f};
  const float gap = 0.5f;
  LatentTensor out = weighted_latent_average(nb, store, gap / 20.0f);
  float max_diff = 0.0f;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    max_diff = std::max(max_diff, std::abs(out.data[i] - store.payloads[3].data[i]));
  REQUIRE(max_diff < 1e-4f);
}

TEST_CASE("weighted_latent_average stays inside the elementwise payload hull") {
  VectorStore store = payload_store(32, 4, 49);
  FlatIndex flat{&store};
  Rng rng(50);
  for (int trial = 0; trial < 200; ++trial) {
    EmbeddingVector q =
        query_of(synthetic::random_vectors(1, store.dim, Seed{rng.next_u64()}));
    NeighborSet nb = flat_search(flat, q, 4);
    LatentTensor out = weighted_latent_average(nb, store, auto_temperature(nb));
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      float lo = std::numeric_limits<float>::infinity();
      float hi = -lo;
      for (auto id : nb.ids) {
        lo = std::min(lo, store.payloads[id].data[i]);
        hi = std::max(hi, store.payloads[id].data[i]);
      }
      REQUIRE(out.data[i] >= lo);
      REQUIRE(out.data[i] <= hi);
    }
  }
}

TEST_CASE("weighted_latent_average validates inputs") {
  VectorStore store = payload_store(4, 4, 51);
  NeighborSet empty;
  REQUIRE_THROWS_AS(weighted_latent_average(empty, store, 1.0f), std::invalid_argument);
  NeighborSet nb;
  nb.ids = {0};
  nb.distances = {0.1f};
  REQUIRE_THROWS_AS(weighted_latent_average(nb, store, 0.0f), std::invalid_argument);
  VectorStore no_payloads = random_store(4, 64, 52);
  REQUIRE_THROWS_AS(weighted_latent_average(nb, no_payloads, 1.0f),
                    std::invalid_argument);
}

TEST_CASE("latent_knn_search self-match and oracle agreement") {
  VectorStore store = payload_store(1000, 4, 53);
  LatentTensor q = store.payloads[123];
  NeighborSet self = latent_knn_search(store, q, 1);
  REQUIRE(self.ids[0] == 123);
  REQUIRE(self.distances[0] == 0.0f);

  Rng rng(54);
  for (int trial = 0; trial < 10; ++trial) {
    LatentTensor probe = make_latent(4, 4, 4);
    for (auto& v : probe.data) v = rng.normal_float();
    NeighborSet nb = latent_knn_search(store, probe, 5);
    REQUIRE(nb.ids == brute_force_ids(store.vectors, store.dim, probe.data, 5));
  }
  REQUIRE_THROWS_AS(latent_knn_search(store, q, 1001), std::invalid_argument);
  LatentTensor wrong = make_latent(4, 8, 8);
  REQUIRE_THROWS_AS(latent_knn_search(store, wrong, 1), std::invalid_argument);
}

TEST_CASE("hybrid_synthesize with an identity stage equals the weighted average") {
  VectorStore store = payload_store(64, 4, 55);
  FlatIndex flat{&store};
  backend::IdentityStage identity(backend::StageKind::denoise);
  EmbeddingVector q = query_of(synthetic::random_vectors(1, store.dim, Seed{56}));
  SynthesisOptions opts;
  opts.k = 4;
  LatentTensor out = hybrid_synthesize(q, flat, store, identity, Seed{57}, opts);
  NeighborSet nb = flat_search(flat, q, 4);
  LatentTensor want = weighted_latent_average(nb, store, auto_temperature(nb));
  REQUIRE(out.data == want.data);
}

TEST_CASE("hybrid_synthesize matches the composed reference path with stub denoise") {
  VectorStore store = payload_store(64, 4, 58);
  FlatIndex flat{&store};
  class DenoiseStage : public backend::Stage {
   public:
    explicit DenoiseStage(Seed s) : seed_(s) {}
    backend::StageKind kind() const override { return backend::StageKind::denoise; }
    backend::Payload process(backend::Payload in) override {
      return backend::stub_denoise(std::get<LatentTensor>(in), seed_);
    }

   private:
    Seed seed_;
  } denoise(Seed{99});

  EmbeddingVector q = query_of(synthetic::random_vectors(1, store.dim, Seed{59}));
  SynthesisOptions opts;
  opts.k = 3;
  LatentTensor out = hybrid_synthesize(q, flat, store, denoise, Seed{99}, opts);
  NeighborSet nb = flat_search(flat, q, 3);
  LatentTensor reference = backend::stub_denoise(
      weighted_latent_average(nb, store, auto_temperature(nb)), Seed{99});
  REQUIRE(out.data == reference.data);

  LatentTensor again = hybrid_synthesize(q, flat, store, denoise, Seed{99}, opts);
  REQUIRE(again.data == out.data);
}

TEST_CASE("hybrid_synthesize with k=1 and identity denoise returns the neighbor") {
  VectorStore store = payload_store(16, 4, 60);
  FlatIndex flat{&store};
  backend::IdentityStage identity(backend::StageKind::denoise);
  EmbeddingVector q = query_of({store.row(9), store.row(9) + store.dim});
  SynthesisOptions opts;
  opts.k = 1;
  LatentTensor out = hybrid_synthesize(q, flat, store, identity, Seed{0}, opts);
  REQUIRE(out.data == store.payloads[9].data);
}

TEST_CASE("hybrid_synthesize works over an IVF-PQ index") {
  VectorStore store = payload_store(512, 4, 61);
  IvfPqParams params;
  params.nlist = 8;
  params.m = 8;
  params.seed = Seed{62};
  IvfPqIndex index = ivfpq_build(store, params);
  backend::IdentityStage identity(backend::StageKind::denoise);
  EmbeddingVector q = query_of(synthetic::random_vectors(1, store.dim, Seed{63}));
  SynthesisOptions opts;
  opts.k = 4;
  opts.nprobe = 8;
  LatentTensor out = hybrid_synthesize(q, index, store, identity, Seed{0}, opts);
  NeighborSet nb = ivfpq_search(index, q, 4, 8);
  LatentTensor want = weighted_latent_average(nb, store, auto_temperature(nb));
  REQUIRE(out.data == want.data);
}
