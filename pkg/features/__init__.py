# Features Module
