# bev/__init__.py
