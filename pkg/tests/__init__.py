"""Test package for the resource allocation toolkit."""
