# Tests package initialization 