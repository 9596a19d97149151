#pragma once

#include <span>
#include <vector>

#include "drnets/drscores.hpp"
#include "drnets/matrix.hpp"
#include "drnets/predictor.hpp"

/// Batch evaluation of predictors, pseudo-outcomes and scores over datasets.
/// `parallel` distributes row chunks over OpenMP workers; `serial` is the
/// single-threaded reference. Both produce bit-identical results because every
/// row is computed independently and no floating-point reduction is shared.
namespace drnets::kernels {

/// Sequential-score inputs: stage covariates plus the path indicators.
struct SequentialBatch {
  const Matrix& s1;
  const Matrix& s2bar;
  std::span<const int> a;  // first-exposure indicator of the target path
  std::span<const int> b;  // second-exposure indicator of the target path
  std::span<const double> y;
};

struct DeltaBatch {
  std::vector<double> delta1;
  std::vector<double> delta2;
};

#define DRNETS_KERNEL_DECLS                                                                    \
  std::vector<double> predict(const Predictor& p, const Matrix& X);                            \
  std::vector<double> cate_pseudo_outcomes(const CateData& data, const CateNuisance& nuis);    \
  std::vector<double> stage2_pseudo_outcomes(const SequentialBatch& batch, const Predictor& nu, \
                                             const Predictor& rho, double clip);               \
  std::vector<double> sequential_scores(const SequentialBatch& batch,                          \
                                        const SequentialNuisance& nuis);                       \
  DeltaBatch delta_terms(const CateData& data, const CateNuisance& hat, const CateNuisance& truth);

namespace serial {
DRNETS_KERNEL_DECLS
}  // namespace serial

namespace parallel {
DRNETS_KERNEL_DECLS
}  // namespace parallel

#undef DRNETS_KERNEL_DECLS

}  // namespace drnets::kernels
