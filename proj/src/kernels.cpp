#include "drnets/kernels.hpp"

#include <algorithm>

#include "drnets/error.hpp"
#include "drnets/parallel.hpp"

namespace drnets::kernels {
namespace {

constexpr std::size_t kChunk = 256;

struct SerialLoop {
  template <class Body>
  void operator()(std::size_t n, Body&& body) const {
    serial_for(n, body);
  }
  std::size_t chunk(std::size_t n) const { return std::max<std::size_t>(n, 1); }
};

struct ParallelLoop {
  template <class Body>
  void operator()(std::size_t n, Body&& body) const {
    parallel_for(n, body);
  }
  std::size_t chunk(std::size_t) const { return kChunk; }
};

template <class Loop>
std::vector<double> predict_impl(const Predictor& p, const Matrix& X, Loop loop) {
  const std::size_t n = X.rows();
  std::vector<double> out(n);
  const std::size_t chunk = loop.chunk(n);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  loop(chunks, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    p.predict_rows(X, begin, std::min(n, begin + chunk), out);
  });
  return out;
}

template <class Loop>
std::vector<double> cate_impl(const CateData& data, const CateNuisance& nuis, Loop loop) {
  const auto pi = predict_impl(nuis.pi, data.s, loop);
  const auto mu0 = predict_impl(nuis.mu0, data.s, loop);
  const auto mu1 = predict_impl(nuis.mu1, data.s, loop);
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = cate_pseudo_outcome(data.t[i], data.y[i], {pi[i], mu0[i], mu1[i]},
                                 nuis.propensity_clip);
  return out;
}

void check_batch(const SequentialBatch& b) {
  const std::size_t n = b.y.size();
  if (b.s1.rows() != n || b.s2bar.rows() != n || b.a.size() != n || b.b.size() != n)
    throw InputError("sequential batch: column lengths differ");
}

template <class Loop>
std::vector<double> stage2_impl(const SequentialBatch& batch, const Predictor& nu,
                                const Predictor& rho, double clip, Loop loop) {
  check_batch(batch);
  const auto nv = predict_impl(nu, batch.s2bar, loop);
  const auto rv = predict_impl(rho, batch.s2bar, loop);
  std::vector<double> out(batch.y.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = stage2_pseudo_outcome(batch.b[i], batch.y[i], nv[i], rv[i], clip);
  return out;
}

template <class Loop>
std::vector<double> scores_impl(const SequentialBatch& batch, const SequentialNuisance& nuis,
                                Loop loop) {
  check_batch(batch);
  const auto pi = predict_impl(nuis.pi, batch.s1, loop);
  const auto rho = predict_impl(nuis.rho, batch.s2bar, loop);
  const auto nu = predict_impl(nuis.nu, batch.s2bar, loop);
  const auto mu = predict_impl(nuis.mu, batch.s1, loop);
  std::vector<double> out(batch.y.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = sequential_score(batch.a[i], batch.b[i], batch.y[i], {pi[i], rho[i], nu[i], mu[i]},
                              nuis.propensity_clip);
  return out;
}

template <class Loop>
DeltaBatch delta_impl(const CateData& data, const CateNuisance& hat, const CateNuisance& truth,
                      Loop loop) {
  const auto hp = predict_impl(hat.pi, data.s, loop);
  const auto h0 = predict_impl(hat.mu0, data.s, loop);
  const auto h1 = predict_impl(hat.mu1, data.s, loop);
  const auto tp = predict_impl(truth.pi, data.s, loop);
  const auto t0 = predict_impl(truth.mu0, data.s, loop);
  const auto t1 = predict_impl(truth.mu1, data.s, loop);
  DeltaBatch out{std::vector<double>(data.size()), std::vector<double>(data.size())};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto d = delta_decomposition(data.t[i], data.y[i], {hp[i], h0[i], h1[i]},
                                       {tp[i], t0[i], t1[i]}, hat.propensity_clip);
    out.delta1[i] = d.delta1();
    out.delta2[i] = d.delta2();
  }
  return out;
}

}  // namespace

#define DRNETS_KERNEL_DEFS(LOOP)                                                                \
  std::vector<double> predict(const Predictor& p, const Matrix& X) {                            \
    return predict_impl(p, X, LOOP{});                                                          \
  }                                                                                             \
  std::vector<double> cate_pseudo_outcomes(const CateData& data, const CateNuisance& nuis) {    \
    return cate_impl(data, nuis, LOOP{});                                                       \
  }                                                                                             \
  std::vector<double> stage2_pseudo_outcomes(const SequentialBatch& batch, const Predictor& nu, \
                                             const Predictor& rho, double clip) {               \
    return stage2_impl(batch, nu, rho, clip, LOOP{});                                           \
  }                                                                                             \
  std::vector<double> sequential_scores(const SequentialBatch& batch,                          \
                                        const SequentialNuisance& nuis) {                       \
    return scores_impl(batch, nuis, LOOP{});                                                    \
  }                                                                                             \
  DeltaBatch delta_terms(const CateData& data, const CateNuisance& hat,                         \
                         const CateNuisance& truth) {                                           \
    return delta_impl(data, hat, truth, LOOP{});                                                \
  }

namespace serial {
DRNETS_KERNEL_DEFS(SerialLoop)
}  // namespace serial

namespace parallel {
DRNETS_KERNEL_DEFS(ParallelLoop)
}  // namespace parallel

#undef DRNETS_KERNEL_DEFS

}  // namespace drnets::kernels
