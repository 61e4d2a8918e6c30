#pragma once

#include <doctest.h>

#include <functional>

#include "patchood/error.hpp"

/// Runs fn and returns the code of the patchood::Error it throws.
inline patchood::ErrorCode error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const patchood::Error& e) {
    return e.code();
  }
  FAIL("expected a patchood::Error");
  return patchood::ErrorCode::InvalidArgument;
}
