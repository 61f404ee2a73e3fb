#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qreg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Collinear / coincident point sets handed to a least-squares solver.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class EmptyCloud : public Error {
 public:
  EmptyCloud() : Error("point cloud is empty") {}
};

class TooFewPoints : public Error {
 public:
  TooFewPoints(std::size_t have, std::size_t need)
      : Error("quadric fit needs at least " + std::to_string(need) + " points, got " +
              std::to_string(have)),
        have_(have),
        need_(need) {}
  std::size_t have() const noexcept { return have_; }
  std::size_t need() const noexcept { return need_; }

 private:
  std::size_t have_;
  std::size_t need_;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class DegenerateQuadric : public Error {
 public:
  using Error::Error;
};

class ZeroGradient : public Error {
 public:
  using Error::Error;
};

/// Wraps a fitting failure with the index of the point it happened at.
class PatchFailure : public Error {
 public:
  enum class Cause { TooFewPoints, SingularSystem, DegenerateQuadric, ZeroGradient };

  PatchFailure(std::size_t point_index, Cause cause, const std::string& reason)
      : Error("patch at point " + std::to_string(point_index) + ": " + reason),
        point_index_(point_index),
        cause_(cause) {}
  std::size_t point_index() const noexcept { return point_index_; }
  Cause cause() const noexcept { return cause_; }

 private:
  std::size_t point_index_;
  Cause cause_;
};

class NotDistinct : public Error {
 public:
  NotDistinct() : Error("solver requires two patches with distinct axis lengths") {}
};

class NoEligibleCorrespondences : public Error {
 public:
  NoEligibleCorrespondences()
      : Error("no correspondence has two patches with distinct axis lengths") {}
};

class InvalidSpec : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  /// `offset` is a 1-based line number for text formats and a byte offset for binary data.
  ParseError(const std::string& what, std::size_t offset, bool is_line)
      : Error(what + (is_line ? " (line " : " (byte ") + std::to_string(offset) + ")"),
        offset_(offset),
        is_line_(is_line) {}
  std::size_t offset() const noexcept { return offset_; }
  bool is_line() const noexcept { return is_line_; }

 private:
  std::size_t offset_;
  bool is_line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace qreg
