#ifndef LPRE_LPRE_HPP
#define LPRE_LPRE_HPP

#include "lpre/error.hpp"
#include "lpre/linalg.hpp"
#include "lpre/model.hpp"
#include "lpre/estimators.hpp"
#include "lpre/inference.hpp"
#include "lpre/streaming.hpp"
#include "lpre/simulate.hpp"

#endif  // LPRE_LPRE_HPP
