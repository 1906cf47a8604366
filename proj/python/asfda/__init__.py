from ._asfda import (
    Error,
    asd,
    confidence,
    cosine_distance,
    minmax_normalize,
    quantile_transform,
    read_tensor,
    score_round,
    select_reliable,
    select_top,
    temperature,
    write_tensor,
)
