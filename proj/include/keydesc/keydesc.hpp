#ifndef KEYDESC_KEYDESC_HPP
#define KEYDESC_KEYDESC_HPP

#include "keydesc/backends.hpp"
#include "keydesc/corpus.hpp"
#include "keydesc/databuilder.hpp"
#include "keydesc/dense.hpp"
#include "keydesc/descriptor.hpp"
#include "keydesc/mafe.hpp"
#include "keydesc/rankers.hpp"
#include "keydesc/remote_backend.hpp"
#include "keydesc/spans.hpp"
#include "keydesc/textmetrics.hpp"

#endif  // KEYDESC_KEYDESC_HPP
