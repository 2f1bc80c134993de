#pragma once

#include <cstddef>
#include <span>

// Dense compute kernels behind the heavy primitives.
//
// Every kernel exists twice: `serial` is the plain reference loop nest kept for
// testing, and `parallel` distributes independent output elements across
// OpenMP threads. Both evaluate each output element with the same summation
// order, so their results are bitwise identical regardless of thread count.
// Output buffers are overwritten, not accumulated into.

namespace dccm::kernels {

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t pad = 0;

  std::size_t out_height() const { return height + 2 * pad - kernel_h + 1; }
  std::size_t out_width() const { return width + 2 * pad - kernel_w + 1; }
};

struct PoolGeometry {
  std::size_t planes = 0;  // batch * channels
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 0;
  std::size_t stride = 0;

  std::size_t out_height() const { return (height - kernel) / stride + 1; }
  std::size_t out_width() const { return (width - kernel) / stride + 1; }
};

namespace serial {
// c[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n);
// c[m x n] = a[k x m]^T * b[k x n]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
// grad_bias may be empty.
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias);

// argmax receives the flat input index chosen for every output element.
void maxpool2d_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output,
                       std::span<std::size_t> argmax);
void avgpool2d_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output);
void avgpool2d_backward(const PoolGeometry& g, std::span<const double> grad_out, std::span<double> grad_in);
}  // namespace serial

namespace parallel {
// c[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
            std::size_t k, std::size_t n);
// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n);
// c[m x n] = a[k x m]^T * b[k x n]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
               std::size_t k, std::size_t n);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_out,
                           std::span<const double> weight, std::span<double> grad_in);
// grad_bias may be empty.
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias);

// argmax receives the flat input index chosen for every output element.
void maxpool2d_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output,
                       std::span<std::size_t> argmax);
void avgpool2d_forward(const PoolGeometry& g, std::span<const double> input, std::span<double> output);
void avgpool2d_backward(const PoolGeometry& g, std::span<const double> grad_out, std::span<double> grad_in);
}  // namespace parallel

}  // namespace dccm::kernels
