#pragma once

#include <cstdint>

#include "linea/linear.hpp"
#include "linea/tensor.hpp"

namespace linea {

// Standard scaled dot-product multi-head self-attention over a token matrix
// (n, d). No normalization layers; residuals are the caller's business.
struct MhaParams {
  std::size_t heads = 8;
  LinearMap wq, wk, wv, wo;  // all d -> d
};

struct MhaTrace {
  Tensor x;     // (n, d)
  Tensor q, k, v;
  Tensor attn;  // (heads, n, n)
  Tensor ctx;   // (n, d) concatenated head outputs, pre-wo
};

MhaParams make_mha_params(std::size_t embed_dim, std::size_t heads, const char* name,
                          std::uint64_t seed);
MhaParams make_mha_grads(const MhaParams& params);

Tensor mha_forward(const Tensor& x, const MhaParams& params, MhaTrace* trace);

// Returns d(loss)/dx and accumulates parameter gradients into `grads`.
Tensor mha_backward(const Tensor& g_out, const MhaTrace& trace, const MhaParams& params,
                    MhaParams& grads);

// Row-wise application of a LinearMap to a (n, in) matrix.
Tensor linear_rows(const Tensor& x, const LinearMap& m);
void linear_rows_backward(const LinearMap& m, const Tensor& x, const Tensor& gy, LinearMap* grad,
                          Tensor* gx);

}  // namespace linea
