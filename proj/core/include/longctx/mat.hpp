#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace longctx {

// Dense row-major matrix. All reductions below run in a fixed left-to-right
// order so repeated runs are bit-identical.
template <class T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * static_cast<size_t>(c), T(0)) {}

  T* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  const T* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
  T& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  const T& at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
  void zero() { a.assign(a.size(), T(0)); }
  size_t size() const { return a.size(); }
};

// C += A * B   (A: m x k, B: k x n, C: m x n)
template <class T>
void matmul_acc(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
  if (A.cols != B.rows || C.rows != A.rows || C.cols != B.cols)
    throw std::invalid_argument("matmul_acc: dimension mismatch");
  const int m = A.rows, k = A.cols, n = B.cols;
  for (int i = 0; i < m; ++i) {
    const T* arow = A.row(i);
    T* crow = C.row(i);
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = B.row(p);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A^T * B   (A: k x m, B: k x n, C: m x n)
template <class T>
void matmul_tn_acc(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
  if (A.rows != B.rows || C.rows != A.cols || C.cols != B.cols)
    throw std::invalid_argument("matmul_tn_acc: dimension mismatch");
  const int k = A.rows, m = A.cols, n = B.cols;
  for (int p = 0; p < k; ++p) {
    const T* arow = A.row(p);
    const T* brow = B.row(p);
    for (int i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = C.row(i);
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T   (A: m x k, B: n x k, C: m x n)
template <class T>
void matmul_nt_acc(const Mat<T>& A, const Mat<T>& B, Mat<T>& C) {
  if (A.cols != B.cols || C.rows != A.rows || C.cols != B.rows)
    throw std::invalid_argument("matmul_nt_acc: dimension mismatch");
  const int m = A.rows, k = A.cols, n = B.rows;
  for (int i = 0; i < m; ++i) {
    const T* arow = A.row(i);
    T* crow = C.row(i);
    for (int j = 0; j < n; ++j) {
      const T* brow = B.row(j);
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

template <class T>
Mat<T> matmul(const Mat<T>& A, const Mat<T>& B) {
  Mat<T> C(A.rows, B.cols);
  matmul_acc(A, B, C);
  return C;
}

}  // namespace longctx
