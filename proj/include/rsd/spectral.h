// Copyright (c) the resynth-detect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RSD_SPECTRAL_H_
#define RSD_SPECTRAL_H_

#include <complex>
#include <span>
#include <vector>

namespace rsd::spectral {

// Unnormalized 2D DFT of a real h x w plane in natural (uncentered) order:
// F(u, v) = sum_{y,x} f(y, x) exp(-2 pi i (u y / h + v x / w)).
std::vector<std::complex<double>> Fft2(std::span<const double> plane, int h,
                                       int w);

// Inverse of Fft2 (scaled by 1 / (h w)); returns the real part.
std::vector<double> InverseFft2Real(
    std::span<const std::complex<double>> spectrum, int h, int w);

// Signed frequency of DFT index k along an axis of length n.
inline int SignedFrequency(int k, int n) { return k <= (n - 1) / 2 ? k : k - n; }

// Integer radius bin of DFT index (u, v): round(sqrt(fu^2 + fv^2)).
int RadiusBin(int u, int v, int h, int w);
int MaxRadius(int h, int w);

// Mean of `values` (natural DFT order) over each integer-radius ring.
// Rings that contain no index are 0.
std::vector<double> AzimuthalMean(std::span<const double> values, int h, int w);

// Orthonormal type-II 2D DCT and its inverse.
std::vector<double> Dct2(std::span<const double> plane, int h, int w);
std::vector<double> InverseDct2(std::span<const double> coeffs, int h, int w);

// Moves the zero frequency to (h/2, w/2).
std::vector<double> FftShift(std::span<const double> values, int h, int w);

}  // namespace rsd::spectral

#endif  // RSD_SPECTRAL_H_
