#pragma once

#include <stdexcept>
#include <string>

namespace twakit {

// Base for failures caused by the data rather than by the caller.
// The CLI maps these to exit code 2.
class data_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class insufficient_data_error : public data_error {
public:
    using data_error::data_error;
};

class invalid_template_error : public data_error {
public:
    using data_error::data_error;
};

class insufficient_noise_error : public data_error {
public:
    using data_error::data_error;
};

class degenerate_labels_error : public data_error {
public:
    using data_error::data_error;
};

// Synthesis gave up after bounded retries (e.g. the corrected QT gate).
class generation_error : public data_error {
public:
    generation_error(const std::string& what, int retries)
        : data_error(what), retries_(retries) {}
    int retries() const noexcept { return retries_; }

private:
    int retries_ = 0;
};

}  // namespace twakit
