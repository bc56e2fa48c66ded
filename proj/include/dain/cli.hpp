#pragma once

namespace dain::cli {

int dispatch(int argc, char** argv);

} // namespace dain::cli
