#pragma once

#include <stdexcept>
#include <string>

namespace pcdiff {

// All library failures surface as this type; the message is a single line
// prefixed with the originating module, e.g. "ply: line 4: ...".
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pcdiff
