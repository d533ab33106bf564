# -*- coding: utf-8 -*-
"""Реестр запусков в SQLite."""
