#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "specmmd/error.hpp"
#include "specmmd/rng.hpp"
#include "specmmd/types.hpp"

namespace specmmd {

/// Two samples drawn from P and Q; rows are observations.
struct TwoSample {
  Matrixd x;  // N x d
  Matrixd y;  // M x d
};

namespace detail {

inline void check_two_sample(const TwoSample& data, const char* where) {
  if (data.x.cols() != data.y.cols()) {
    fail(ErrorKind::Dimension,
         std::string(where) + ": x and y disagree on dimension (" +
             std::to_string(data.x.cols()) + " vs " +
             std::to_string(data.y.cols()) + ")");
  }
  if (data.x.rows() < 4 || data.y.rows() < 4) {
    fail(ErrorKind::InvalidArgument,
         std::string(where) + ": need N, M >= 4 to leave room for splitting");
  }
  if (!data.x.allFinite() || !data.y.allFinite()) {
    fail(ErrorKind::InvalidArgument,
         std::string(where) + ": samples contain non-finite entries");
  }
}

inline void fill_normal(Matrixd& mat, rng::Stream& stream) {
  for (Index i = 0; i < mat.rows(); ++i) {
    for (Index j = 0; j < mat.cols(); ++j) {
      mat(i, j) = stream.normal();
    }
  }
}

inline void fill_cauchy(Matrixd& mat, rng::Stream& stream) {
  for (Index i = 0; i < mat.rows(); ++i) {
    for (Index j = 0; j < mat.cols(); ++j) {
      mat(i, j) = stream.cauchy();
    }
  }
}

inline void check_gen_args(Index d, Index big_n, Index big_m) {
  if (d < 1) fail(ErrorKind::InvalidArgument, "generator: d must be >= 1");
  if (big_n < 4 || big_m < 4) {
    fail(ErrorKind::InvalidArgument, "generator: need N, M >= 4");
  }
}

}  // namespace detail

/// P = N(0, I_d), Q = N(mu*1, I_d): every coordinate of y is shifted by mu.
inline TwoSample gen_gaussian_mean_shift(Index d, double mu, Index big_n,
                                         Index big_m, std::uint64_t seed) {
  detail::check_gen_args(d, big_n, big_m);
  TwoSample out;
  out.x.resize(big_n, d);
  out.y.resize(big_m, d);
  rng::Stream sx(seed, rng::stream::kDataX);
  rng::Stream sy(seed, rng::stream::kDataY);
  detail::fill_normal(out.x, sx);
  detail::fill_normal(out.y, sy);
  out.y.array() += mu;
  return out;
}

/// P = N(0, I_d), Q = N(0, sigma2 * I_d).
inline TwoSample gen_gaussian_scale_shift(Index d, double sigma2, Index big_n,
                                          Index big_m, std::uint64_t seed) {
  detail::check_gen_args(d, big_n, big_m);
  if (!(sigma2 >= 1.0)) {
    fail(ErrorKind::InvalidArgument,
         "gen_gaussian_scale_shift: sigma2 must be >= 1, got " +
             std::to_string(sigma2));
  }
  TwoSample out;
  out.x.resize(big_n, d);
  out.y.resize(big_m, d);
  rng::Stream sx(seed, rng::stream::kDataX);
  rng::Stream sy(seed, rng::stream::kDataY);
  detail::fill_normal(out.x, sx);
  detail::fill_normal(out.y, sy);
  out.y *= std::sqrt(sigma2);
  return out;
}

/// P standard Cauchy per coordinate, Q shifted by mu per coordinate.
inline TwoSample gen_cauchy_median_shift(Index d, double mu, Index big_n,
                                         Index big_m, std::uint64_t seed) {
  detail::check_gen_args(d, big_n, big_m);
  TwoSample out;
  out.x.resize(big_n, d);
  out.y.resize(big_m, d);
  rng::Stream sx(seed, rng::stream::kDataX);
  rng::Stream sy(seed, rng::stream::kDataY);
  detail::fill_cauchy(out.x, sx);
  detail::fill_cauchy(out.y, sy);
  out.y.array() += mu;
  return out;
}

// ---------------------------------------------------------------------------
// CSV: comma-separated decimal floats, optional single header row,
// newline-terminated rows, rectangular.
// ---------------------------------------------------------------------------

inline Matrixd load_matrix_csv(const std::string& path, bool has_header) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool skipped_header = !has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    std::vector<double> row;
    std::size_t start = 0;
    std::size_t col = 0;
    while (true) {
      ++col;
      const std::size_t comma = line.find(',', start);
      const std::string_view cell(line.data() + start,
                                  (comma == std::string::npos ? line.size()
                                                              : comma) -
                                      start);
      double value = 0;
      const auto [ptr, ec] =
          std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        fail(ErrorKind::Parse, "'" + path + "': non-numeric cell at row " +
                                   std::to_string(line_no) + ", column " +
                                   std::to_string(col));
      }
      row.push_back(value);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      fail(ErrorKind::Parse,
           "'" + path + "': ragged row " + std::to_string(line_no) + " has " +
               std::to_string(row.size()) + " cells, expected " +
               std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::Parse, "'" + path + "': no data rows");
  Matrixd out(static_cast<Index>(rows.size()),
              static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) {
      out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return out;
}

inline TwoSample load_csv(const std::string& path_x, const std::string& path_y,
                          bool has_header) {
  TwoSample out;
  out.x = load_matrix_csv(path_x, has_header);
  out.y = load_matrix_csv(path_y, has_header);
  if (out.x.cols() != out.y.cols()) {
    fail(ErrorKind::Parse, "column counts differ: '" + path_x + "' has d=" +
                               std::to_string(out.x.cols()) + ", '" + path_y +
                               "' has d=" + std::to_string(out.y.cols()));
  }
  detail::check_two_sample(out, "load_csv");
  return out;
}

inline void write_matrix_csv(const std::string& path, const Matrixd& mat) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write file '" + path + "'");
  out.precision(17);
  for (Index i = 0; i < mat.rows(); ++i) {
    for (Index j = 0; j < mat.cols(); ++j) {
      if (j > 0) out << ',';
      out << mat(i, j);
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace specmmd
