#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace lernr {

// Base of every error thrown by the library. Catch this to handle all
// lernr failures uniformly; catch a subclass to react to one category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

// A per-frame failure while ingesting a trajectory.
class FrameError : public InputError {
 public:
  FrameError(std::string frame_id, const std::string& what)
      : InputError("frame '" + frame_id + "': " + what), frame_id_(std::move(frame_id)) {}
  const std::string& frame_id() const noexcept { return frame_id_; }

 private:
  std::string frame_id_;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Embedding provider failure. `attempts` is how many tries were made before
// giving up; `status` is the last HTTP status seen (0 for transport errors).
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, int attempts = 1, int status = 0)
      : Error(what), attempts_(attempts), status_(status) {}
  int attempts() const noexcept { return attempts_; }
  int status() const noexcept { return status_; }

 private:
  int attempts_;
  int status_;
};

class NoGoalError : public Error {
 public:
  using Error::Error;
};

class NoOrientationError : public Error {
 public:
  using Error::Error;
};

class NoPathError : public Error {
 public:
  NoPathError(const std::string& what, std::size_t expanded_cells)
      : Error(what), expanded_cells_(expanded_cells) {}
  // Size of the region reachable from the start.
  std::size_t expanded_cells() const noexcept { return expanded_cells_; }

 private:
  std::size_t expanded_cells_;
};

class SnappingError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class ClientError : public Error {
 public:
  ClientError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw_response)
      : Error(what), raw_response_(std::move(raw_response)) {}
  const std::string& raw_response() const noexcept { return raw_response_; }

 private:
  std::string raw_response_;
};

}  // namespace lernr
