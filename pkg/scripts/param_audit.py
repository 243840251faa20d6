"""Print the block parameter table and the temporal-module budget."""

import sys

from vmsuite import audit
from vmsuite.config import load_block_configs

if __name__ == "__main__":
    configs = load_block_configs(sys.argv[1]) if len(sys.argv) > 1 else audit.default_configs()
    lines, _ = audit.param_audit(configs)
    print("\n".join(lines))
