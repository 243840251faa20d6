"""State-space sequence kernels and blocks for video token sequences."""

from .blocks import (AdapterConfig, DBMBlockParams, MambaBlockParams, ViMBlockParams, adapter_forward,
                     block_backward, block_forward, count_params, init_block, space_time_block,
                     swap_directions)
from .layout import TokenLayout, VideoTokens, arrange_multimodal, extract_video, flatten_spacetime, pool_cls
from .ssm import (DiscreteSsm, SsmParams, conv_apply, discretize_zoh, kernel_conv, scan_recurrent,
                  selective_scan, selective_scan_backward, selective_scan_chunked)

__version__ = "0.1.0"
