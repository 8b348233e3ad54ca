#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gmmu {

// Base of every error raised by the simulator. Callers that only care about
// "the run failed" catch this; tests match the concrete subclasses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Physical frame pool ran dry while building page tables.
class CapacityExceeded : public Error {
 public:
  using Error::Error;
};

// A page-table walk found no entry. Page faults are not modeled, so this
// aborts the simulation.
class Unmapped : public Error {
 public:
  Unmapped(const std::string& what, int level) : Error(what), level_(level) {}
  int level() const { return level_; }

 private:
  int level_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t record)
      : Error(what), record_(record) {}
  // Header line number or binary record index, whichever the message names.
  std::uint64_t record() const { return record_; }

 private:
  std::uint64_t record_;
};

class UndeclaredPage : public Error {
 public:
  UndeclaredPage(const std::string& what, std::uint64_t record, std::uint64_t vpn)
      : Error(what), record_(record), vpn_(vpn) {}
  std::uint64_t record() const { return record_; }
  std::uint64_t vpn() const { return vpn_; }

 private:
  std::uint64_t record_;
  std::uint64_t vpn_;
};

class SpecInvalid : public Error {
 public:
  using Error::Error;
};

// Configuration problem. key() names the offending "section.key".
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error(key + ": " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// Structurally impossible run setup (bad partition, empty workload, ...).
class ConfigInvalid : public Error {
 public:
  using Error::Error;
};

class DivisionDomain : public Error {
 public:
  using Error::Error;
};

}  // namespace gmmu
