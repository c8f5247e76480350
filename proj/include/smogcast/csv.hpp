#pragma once

#include <charconv>
#include <stdexcept>
#include <string>

namespace smogcast {

/// Shortest decimal representation that round-trips the exact double.
inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc())
        throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

inline std::string format_float(float v) {
    char buf[24];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc())
        throw std::runtime_error("format_float: conversion failed");
    return std::string(buf, res.ptr);
}

}  // namespace smogcast
