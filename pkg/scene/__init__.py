# Scene Module
