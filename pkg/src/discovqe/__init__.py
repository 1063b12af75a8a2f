"""Classical simulation and global optimisation of spin-adapted unitary product states."""
