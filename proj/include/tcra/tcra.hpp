#pragma once

#include "tcra/attention.hpp"
#include "tcra/attention_dump.hpp"
#include "tcra/cells.hpp"
#include "tcra/checkpoint.hpp"
#include "tcra/data_io/dataset.hpp"
#include "tcra/data_io/synthetic.hpp"
#include "tcra/data_io/tensor_file.hpp"
#include "tcra/errors.hpp"
#include "tcra/evaluation.hpp"
#include "tcra/models.hpp"
#include "tcra/numerics/grad_check.hpp"
#include "tcra/numerics/tape.hpp"
#include "tcra/numerics/tensor.hpp"
#include "tcra/training.hpp"
