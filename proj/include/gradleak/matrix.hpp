#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace gradleak {

// Dense row-major matrix of doubles.
//
// Every constructor that takes data rejects NaN/Inf entries.  Element access
// through operator() is unchecked; at() is checked.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const;

    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::vector<double> col(std::size_t c) const;

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    Matrix transposed() const;
    double frobenius_norm() const;
    double max_abs() const;
    bool all_finite() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    friend bool operator==(const Matrix& a, const Matrix& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// transpose(a) * b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);

// ||a - b||_F / ||b||_F, or ||a||_F when b is zero.
double relative_frobenius_error(const Matrix& a, const Matrix& b);

}  // namespace gradleak
