#pragma once

#include <cstddef>

#include "pdcrn/tensor.hpp"

// Parameter-free linear transforms. All of them are either orthonormal
// (Haar, DCT) or pure permutations (pixel shuffle), so the adjoint of each
// forward map is its inverse.
namespace pdcrn::transforms {

/// Single-level orthonormal 2-D Haar analysis.
///
/// Every 2x2 block [a b; c d] of channel k yields
///   LL = (a+b+c+d)/2, LH = (a-b+c-d)/2, HL = (a+b-c-d)/2, HH = (a-b-c+d)/2.
/// Subbands are concatenated along channels band-major: output channel
/// `band * c + k` holds band `band` (0=LL, 1=LH, 2=HL, 3=HH) of input channel k.
/// Requires even height and width.
template <typename T>
Tensor4<T> dwt_haar2(const Tensor4<T>& x);

/// Exact inverse of dwt_haar2: (n, 4c, h, w) -> (n, c, 2h, 2w).
template <typename T>
Tensor4<T> idwt_haar2(const Tensor4<T>& y);

/// Orthonormal 2-D DCT-II over non-overlapping `block` x `block` tiles of
/// every channel. Shape is preserved; h and w must be multiples of `block`.
template <typename T>
Tensor4<T> dct2_blockwise(const Tensor4<T>& x, std::size_t block = 8);

template <typename T>
Tensor4<T> idct2_blockwise(const Tensor4<T>& y, std::size_t block = 8);

/// (n, c, h, w) -> (n, c*r*r, h/r, w/r). Output channel k*r*r + i*r + j at
/// (y, x) is input channel k at (y*r + i, x*r + j).
template <typename T>
Tensor4<T> space_to_depth(const Tensor4<T>& x, std::size_t r);

template <typename T>
Tensor4<T> depth_to_space(const Tensor4<T>& x, std::size_t r);

/// Row-major orthonormal DCT-II basis, entry [k * n + i].
const double* dct_basis(std::size_t n);

namespace testing {
// Overrides the Haar analysis coefficient (normally 0.5). Negative-control
// hook for the self-test; never touch this outside tests.
void set_haar_scale(double scale);
double haar_scale();
}  // namespace testing

}  // namespace pdcrn::transforms
