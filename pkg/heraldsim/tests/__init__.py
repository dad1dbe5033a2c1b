import os.path

import heraldsim

__all__ = ["test_data_dir"]

test_data_dir = os.path.join(os.path.dirname(heraldsim.__file__), "tests", "data")
