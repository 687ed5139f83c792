"""Type-differentiated tolls for heterogeneous congestion games on parallel roads."""
