"""Traffic engineering for hybrid SDN/OSPF networks partitioned by SDN nodes."""

__version__ = "0.1.0"
