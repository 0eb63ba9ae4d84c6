#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pcdiff {

// Dense row-major matrix of doubles.
//
// The product kernels accumulate every output element over the inner
// dimension in a fixed sequential order that does not depend on the row
// index, so identical input rows always yield bitwise identical output rows.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    void fill(double v);
    void resize(std::size_t r, std::size_t c);

    bool operator==(const Matrix&) const = default;
};

Matrix transpose(const Matrix& a);

// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out += a * b
void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += a^T * b
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);

// Adds the single-row matrix `bias` to every row of `out`.
void add_row_broadcast(Matrix& out, const Matrix& bias);
// out(0, j) += sum_i a(i, j)
void column_sum_acc(const Matrix& a, Matrix& out);

}  // namespace pcdiff
