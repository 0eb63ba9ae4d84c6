#include "pcdiff/tensor.hpp"

#include <algorithm>
#include <cstring>

#include "pcdiff/error.hpp"

namespace pcdiff {

void Matrix::fill(double v) { std::fill(data.begin(), data.end(), v); }

void Matrix::resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    data.assign(r * c, 0.0);
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    out.resize(a.rows, b.cols);
    matmul_acc(a, b, out);
}

namespace {

// out rows [i, i+R) and columns [j, j+8) += a * b, accumulated over k in
// order. Every output element sees the same operation sequence whichever
// block it falls in.
using v4 = double __attribute__((vector_size(32)));

inline v4 load4(const double* p) {
    v4 v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store4(double* p, v4 v) { std::memcpy(p, &v, sizeof v); }

template <std::size_t R>
void block_kernel(const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
                  std::size_t kdim) {
    v4 lo[R], hi[R];
    for (std::size_t r = 0; r < R; ++r) {
        lo[r] = load4(c + r * ldc);
        hi[r] = load4(c + r * ldc + 4);
    }
    for (std::size_t k = 0; k < kdim; ++k) {
        const v4 b0 = load4(b + k * ldb);
        const v4 b1 = load4(b + k * ldb + 4);
        for (std::size_t r = 0; r < R; ++r) {
            const double s = a[r * lda + k];
            lo[r] += s * b0;
            hi[r] += s * b1;
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        store4(c + r * ldc, lo[r]);
        store4(c + r * ldc + 4, hi[r]);
    }
}

}  // namespace

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.cols != b.rows || out.rows != a.rows || out.cols != b.cols)
        throw Error("tensor: matmul shape mismatch");
    const std::size_t m = a.rows, n = b.cols, kd = a.cols;
    const double* A = a.data.data();
    const double* B = b.data.data();
    double* C = out.data.data();
    const std::size_t n8 = n - n % 8;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4)
        for (std::size_t j = 0; j < n8; j += 8) block_kernel<4>(A + i * kd, kd, B + j, n, C + i * n + j, n, kd);
    for (; i < m; ++i)
        for (std::size_t j = 0; j < n8; j += 8) block_kernel<1>(A + i * kd, kd, B + j, n, C + i * n + j, n, kd);
    if (n8 < n) {
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = n8; j < n; ++j) {
                double acc = C[r * n + j];
                for (std::size_t k = 0; k < kd; ++k) acc += A[r * kd + k] * B[k * n + j];
                C[r * n + j] = acc;
            }
    }
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    if (a.rows != b.rows || out.rows != a.cols || out.cols != b.cols)
        throw Error("tensor: matmul_tn shape mismatch");
    matmul_acc(transpose(a), b, out);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    matmul(a, transpose(b), out);
}

void add_row_broadcast(Matrix& out, const Matrix& bias) {
    if (bias.rows != 1 || bias.cols != out.cols) throw Error("tensor: bias shape mismatch");
    for (std::size_t i = 0; i < out.rows; ++i) {
        double* __restrict c = out.data.data() + i * out.cols;
        for (std::size_t j = 0; j < out.cols; ++j) c[j] += bias.data[j];
    }
}

void column_sum_acc(const Matrix& a, Matrix& out) {
    if (out.rows != 1 || out.cols != a.cols) throw Error("tensor: column sum shape mismatch");
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* __restrict r = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < a.cols; ++j) out.data[j] += r[j];
    }
}

}  // namespace pcdiff
